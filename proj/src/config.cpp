#include "rpcate/config.hpp"

#include <fstream>
#include <set>

#include "rpcate/checkpoint.hpp"

namespace rpcate {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& context) {
    if (!j.is_object()) throw ConfigError(context + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (allowed.count(it.key()) == 0)
            throw ConfigError("unknown key '" + it.key() + "' in " + context);
}

GenConfig generator_from_json(const json& j) {
    check_keys(j, {"m", "n", "seed", "bias_kind", "noise_std"}, "generator block");
    GenConfig g;
    g.m = j.value("m", g.m);
    g.n = j.value("n", g.n);
    g.seed = j.value("seed", g.seed);
    if (j.contains("bias_kind")) g.bias_kind = parse_bias_kind(j["bias_kind"].get<std::string>());
    g.noise_std = j.value("noise_std", g.noise_std);
    return g;
}

GridSpec grid_from_json(const json& j) {
    check_keys(j, {"w", "N", "lr"}, "grid block");
    GridSpec g;
    if (j.contains("w")) g.windows = j["w"].get<std::vector<int>>();
    if (j.contains("N")) g.repetitions = j["N"].get<std::vector<int>>();
    if (j.contains("lr")) g.learning_rates = j["lr"].get<std::vector<double>>();
    return g;
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
    check_keys(j,
               {"dataset", "generator", "x_prime", "x_prime_name", "eval_count", "out",
                "dataset_out", "jobs", "seed", "normalize", "ablation", "residual",
                "share_params", "squared_norm", "hyperparams", "grid"},
               "run config");
    RunConfig cfg;
    try {
        if (j.contains("dataset")) cfg.dataset = j["dataset"].get<std::string>();
        if (j.contains("generator")) cfg.generator = generator_from_json(j["generator"]);
        if (j.contains("x_prime_name")) cfg.x_prime_name = j["x_prime_name"].get<std::string>();
        cfg.eval_count = j.value("eval_count", cfg.eval_count);
        if (j.contains("out")) cfg.out = j["out"].get<std::string>();
        if (j.contains("dataset_out")) cfg.dataset_out = j["dataset_out"].get<std::string>();
        cfg.jobs = j.value("jobs", cfg.jobs);

        if (j.contains("hyperparams")) {
            check_keys(j["hyperparams"],
                       {"x_prime", "w", "N", "lr", "d_h", "d_m", "n1", "n2", "n3", "n4",
                        "lambda", "epochs", "seed", "share_params", "residual",
                        "squared_norm"},
                       "hyperparams block");
            cfg.train.hp = hyperparams_from_json(j["hyperparams"]);
        }
        if (j.contains("x_prime")) cfg.train.hp.x_prime = j["x_prime"].get<int>();
        if (j.contains("seed")) {
            auto seed = j["seed"].get<std::uint64_t>();
            cfg.train.hp.seed = seed;
            if (cfg.generator && !j["generator"].contains("seed")) cfg.generator->seed = seed;
        }
        cfg.train.normalize = j.value("normalize", cfg.train.normalize);
        if (j.contains("ablation"))
            cfg.train.ablation = parse_ablation(j["ablation"].get<std::string>());
        if (j.contains("residual"))
            cfg.train.hp.residual = parse_residual_mode(j["residual"].get<std::string>());
        cfg.train.hp.share_params = j.value("share_params", cfg.train.hp.share_params);
        cfg.train.hp.squared_norm = j.value("squared_norm", cfg.train.hp.squared_norm);
        if (j.contains("grid")) cfg.grid = grid_from_json(j["grid"]);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed run config: ") + e.what());
    }

    if (cfg.jobs < 1) throw ConfigError("jobs must be at least 1");
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return run_config_from_json(j);
}

void validate_data_source(const RunConfig& cfg) {
    if (cfg.dataset.has_value() == cfg.generator.has_value())
        throw ConfigError("exactly one of 'dataset' and 'generator' must be set");
    if (cfg.dataset && !std::filesystem::exists(*cfg.dataset))
        throw ConfigError("dataset '" + cfg.dataset->string() + "' does not exist");
}

}  // namespace rpcate
