#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "rpcate/checkpoint.hpp"
#include "rpcate/config.hpp"
#include "rpcate/log.hpp"
#include "rpcate/metrics.hpp"
#include "rpcate/model.hpp"
#include "rpcate/svg.hpp"
#include "rpcate/synthetic.hpp"
#include "rpcate/training.hpp"

namespace fs = std::filesystem;
using namespace rpcate;

namespace {

std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> jobs;
    std::optional<std::string> ablation;
    std::optional<std::string> residual;
};

void add_override_flags(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--seed", o.seed, "Override the run seed");
    cmd->add_option("--out", o.out, "Override the output directory");
    cmd->add_option("--jobs", o.jobs, "Concurrent grid cells");
    cmd->add_option("--ablation", o.ablation, "Model variant: full, no_rp or no_ca");
    cmd->add_option("--residual", o.residual, "Residual mode: text or literal");
}

RunConfig load_config_with_overrides(const std::string& path, const Overrides& o) {
    RunConfig cfg = load_run_config(path);
    if (o.seed) {
        cfg.train.hp.seed = *o.seed;
        if (cfg.generator) cfg.generator->seed = *o.seed;
    }
    if (o.out) cfg.out = *o.out;
    if (o.jobs) cfg.jobs = *o.jobs;
    if (o.ablation) cfg.train.ablation = parse_ablation(*o.ablation);
    if (o.residual) cfg.train.hp.residual = parse_residual_mode(*o.residual);
    if (cfg.jobs < 1) throw ConfigError("jobs must be at least 1");
    return cfg;
}

struct LoadedData {
    Dataset full;
    Dataset train_split;
    Dataset eval_split;
    bool generated = false;
};

LoadedData obtain_data(RunConfig& cfg) {
    validate_data_source(cfg);
    LoadedData out;
    if (cfg.dataset) {
        out.full = load_csv(*cfg.dataset);
    } else {
        out.full = generate(*cfg.generator);
        out.generated = true;
    }
    if (cfg.x_prime_name)
        cfg.train.hp.x_prime = find_feature(out.full, *cfg.x_prime_name);

    int eval_count = cfg.eval_count >= 0 ? cfg.eval_count : out.full.m() / 6;
    if (eval_count < 0 || eval_count >= out.full.m())
        throw ConfigError("eval_count " + std::to_string(eval_count) +
                          " leaves no training rows (dataset has " +
                          std::to_string(out.full.m()) + ")");
    std::tie(out.train_split, out.eval_split) =
        split_dataset(out.full, out.full.m() - eval_count);
    return out;
}

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    f << content;
    if (!f.flush()) throw std::runtime_error("failed writing '" + path.string() + "'");
}

void write_metrics_json(const fs::path& path, const MetricsReport& mech,
                        const MetricsReport& hybrid) {
    nlohmann::json j;
    j["mechanistic"] = report_to_json(mech);
    j["hybrid"] = report_to_json(hybrid);
    write_text(path, j.dump(2) + "\n");
}

void print_report(const MetricsReport& r) {
    std::cout << r.variant << ": mae=" << format_double(r.mae)
              << " rmse=" << format_double(r.rmse)
              << " are%=" << format_double(r.are_percent)
              << " err<1%=" << r.err_lt_1pct << " err>5%=" << r.err_gt_5pct
              << " mir%=" << format_double(r.mir_percent);
    if (r.are_excluded > 0) std::cout << " (excluded " << r.are_excluded << " zero y_true)";
    std::cout << "\n";
}

int cmd_generate(const std::string& config_path, const Overrides& o) {
    RunConfig cfg = load_config_with_overrides(config_path, o);
    if (!cfg.generator)
        throw ConfigError("generate needs a 'generator' block in the config");
    Dataset d = generate(*cfg.generator);
    fs::path target = cfg.dataset_out ? *cfg.dataset_out : cfg.out / "dataset.csv";
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    save_csv(d, target);
    std::cout << "wrote " << target.string() << " (" << d.m() << " data rows)\n";
    return 0;
}

int cmd_train(const std::string& config_path, const Overrides& o) {
    RunConfig cfg = load_config_with_overrides(config_path, o);
    LoadedData data = obtain_data(cfg);
    fs::create_directories(cfg.out);
    if (data.generated) save_csv(data.full, cfg.out / "dataset.csv");

    log(1, "training on " + std::to_string(data.train_split.m()) + " rows, evaluating on " +
               std::to_string(data.eval_split.m()));
    TrainResult result = train(data.train_split, cfg.train);

    save_checkpoint(result.params, cfg.out / "checkpoint.json",
                    result.scaler ? &*result.scaler : nullptr);
    write_loss_csv(result.loss_history, cfg.out / "loss_history.csv");
    write_text(cfg.out / "loss_curve.svg",
               line_chart_svg(result.loss_history, "Training loss", "loss"));

    const MinMaxScaler* scaler = result.scaler ? &*result.scaler : nullptr;
    EvalOutput train_eval = evaluate_model(result.params, data.train_split, scaler);
    auto [train_mech, train_hybrid] = full_report(train_eval.corrections, data.train_split);
    write_metrics_json(cfg.out / "metrics_train.json", train_mech, train_hybrid);

    std::cout << "trained " << ablation_name(cfg.train.ablation) << " variant for "
              << result.loss_history.size() << " epochs, final loss "
              << format_double(result.loss_history.back()) << "\n";
    std::cout << "train ";
    print_report(train_hybrid);

    if (data.eval_split.m() > 0) {
        EvalOutput ev = evaluate_model(result.params, data.eval_split, scaler);
        auto [mech, hybrid] = full_report(ev.corrections, data.eval_split);
        write_metrics_json(cfg.out / "metrics_eval.json", mech, hybrid);
        std::cout << "eval ";
        print_report(mech);
        std::cout << "eval ";
        print_report(hybrid);
    }
    std::cout << "wrote " << (cfg.out / "checkpoint.json").string() << "\n";
    return 0;
}

int cmd_evaluate(const std::string& checkpoint_path, const std::string& data_path,
                 const std::optional<std::string>& out_dir) {
    Checkpoint cp = load_checkpoint(checkpoint_path);
    Dataset d = load_csv(data_path);
    if (d.n() != cp.params.n_features)
        throw ConfigError("dataset '" + data_path + "' has " + std::to_string(d.n()) +
                          " features but the checkpoint was trained on " +
                          std::to_string(cp.params.n_features));
    EvalOutput ev = evaluate_model(cp.params, d, cp.scaler ? &*cp.scaler : nullptr);
    auto [mech, hybrid] = full_report(ev.corrections, d);
    print_report(mech);
    print_report(hybrid);
    if (out_dir) {
        fs::create_directories(*out_dir);
        write_metrics_json(fs::path(*out_dir) / "metrics.json", mech, hybrid);
        std::cout << "wrote " << (fs::path(*out_dir) / "metrics.json").string() << "\n";
    }
    return 0;
}

int cmd_gridsearch(const std::string& config_path, const Overrides& o) {
    RunConfig cfg = load_config_with_overrides(config_path, o);
    LoadedData data = obtain_data(cfg);
    if (data.eval_split.m() == 0)
        throw ConfigError("grid search needs a non-empty validation split (eval_count > 0)");
    fs::create_directories(cfg.out);
    if (data.generated) save_csv(data.full, cfg.out / "dataset.csv");

    GridResult result =
        grid_search(data.train_split, data.eval_split, cfg.train, cfg.grid, cfg.jobs);
    write_grid_csv(result, cfg.out / "grid.csv");

    if (result.best_index < 0)
        throw std::runtime_error("every grid cell failed; see " +
                                 (cfg.out / "grid.csv").string());
    const GridCell& best = result.cells[static_cast<std::size_t>(result.best_index)];
    nlohmann::json best_json;
    best_json["hyperparams"] = hyperparams_to_json(best.hp);
    best_json["ablation"] = ablation_name(cfg.train.ablation);
    best_json["normalize"] = cfg.train.normalize;
    write_text(cfg.out / "best_config.json", best_json.dump(2) + "\n");

    std::cout << result.cells.size() << " grid cells, best w=" << best.hp.window
              << " N=" << best.hp.repetitions << " lr=" << format_double(best.hp.lr)
              << " with mir%=" << format_double(best.hybrid.mir_percent) << "\n";
    std::cout << "wrote " << (cfg.out / "grid.csv").string() << "\n";
    return 0;
}

int cmd_export_attention(const std::string& checkpoint_path, const std::string& data_path,
                         const std::string& out_dir) {
    Checkpoint cp = load_checkpoint(checkpoint_path);
    Dataset d = load_csv(data_path);
    if (d.n() != cp.params.n_features)
        throw ConfigError("dataset '" + data_path + "' has " + std::to_string(d.n()) +
                          " features but the checkpoint was trained on " +
                          std::to_string(cp.params.n_features));
    EvalOutput ev = evaluate_model(cp.params, d, cp.scaler ? &*cp.scaler : nullptr);
    AttentionExport files = export_attention(ev.attentions, d.feature_names, out_dir);
    for (const auto& p : files.csv_paths) std::cout << "wrote " << p.string() << "\n";
    for (const auto& p : files.svg_paths) std::cout << "wrote " << p.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RP-CATE: recurrent-perceptron channel-attention residual modeling"};
    app.require_subcommand(1);

    Overrides gen_o, train_o, grid_o;
    std::string gen_config, train_config, grid_config;
    std::string eval_checkpoint, eval_data, attn_checkpoint, attn_data, attn_out;
    std::optional<std::string> eval_out;

    CLI::App* generate = app.add_subcommand("generate", "Write a synthetic CSV dataset");
    generate->add_option("--config", gen_config, "Run config (JSON)")->required();
    add_override_flags(generate, gen_o);

    CLI::App* train_cmd = app.add_subcommand("train", "Train and write checkpoint + metrics");
    train_cmd->add_option("--config", train_config, "Run config (JSON)")->required();
    add_override_flags(train_cmd, train_o);

    CLI::App* evaluate = app.add_subcommand("evaluate", "Report metrics for a checkpoint");
    evaluate->add_option("--checkpoint", eval_checkpoint, "Checkpoint JSON")->required();
    evaluate->add_option("--data", eval_data, "Dataset CSV")->required();
    evaluate->add_option("--out", eval_out, "Directory for metrics.json");

    CLI::App* gridsearch = app.add_subcommand("gridsearch", "Run the hyperparameter grid");
    gridsearch->add_option("--config", grid_config, "Run config (JSON)")->required();
    add_override_flags(gridsearch, grid_o);

    CLI::App* export_attn =
        app.add_subcommand("export-attention", "Write attention CSV + SVG per repetition");
    export_attn->add_option("--checkpoint", attn_checkpoint, "Checkpoint JSON")->required();
    export_attn->add_option("--data", attn_data, "Dataset CSV")->required();
    export_attn->add_option("--out", attn_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand(generate)) return cmd_generate(gen_config, gen_o);
        if (app.got_subcommand(train_cmd)) return cmd_train(train_config, train_o);
        if (app.got_subcommand(evaluate))
            return cmd_evaluate(eval_checkpoint, eval_data, eval_out);
        if (app.got_subcommand(gridsearch)) return cmd_gridsearch(grid_config, grid_o);
        if (app.got_subcommand(export_attn))
            return cmd_export_attention(attn_checkpoint, attn_data, attn_out);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const CsvError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const TrainingDiverged& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
