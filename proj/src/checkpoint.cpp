#include "rpcate/checkpoint.hpp"

#include <fstream>
#include <set>
#include <vector>

namespace rpcate {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "rpcate-checkpoint-v1";

json tensor_to_json(const std::string& name, const Tensor& t) {
    json j;
    j["name"] = name;
    j["shape"] = t.shape();
    j["data"] = std::vector<double>(t.data().begin(), t.data().end());
    return j;
}

}  // namespace

json hyperparams_to_json(const HyperParams& hp) {
    json j;
    j["x_prime"] = hp.x_prime;
    j["w"] = hp.window;
    j["N"] = hp.repetitions;
    j["lr"] = hp.lr;
    j["d_h"] = hp.d_h;
    j["d_m"] = hp.d_m;
    j["n1"] = hp.n1;
    j["n2"] = hp.n2;
    j["n3"] = hp.n3;
    j["n4"] = hp.n4;
    j["lambda"] = hp.lambda;
    j["epochs"] = hp.epochs;
    j["seed"] = hp.seed;
    j["share_params"] = hp.share_params;
    j["residual"] = residual_mode_name(hp.residual);
    j["squared_norm"] = hp.squared_norm;
    return j;
}

HyperParams hyperparams_from_json(const json& j) {
    HyperParams hp;
    hp.x_prime = j.value("x_prime", hp.x_prime);
    hp.window = j.value("w", hp.window);
    hp.repetitions = j.value("N", hp.repetitions);
    hp.lr = j.value("lr", hp.lr);
    hp.d_h = j.value("d_h", hp.d_h);
    hp.d_m = j.value("d_m", hp.d_m);
    hp.n1 = j.value("n1", hp.n1);
    hp.n2 = j.value("n2", hp.n2);
    hp.n3 = j.value("n3", hp.n3);
    hp.n4 = j.value("n4", hp.n4);
    hp.lambda = j.value("lambda", hp.lambda);
    hp.epochs = j.value("epochs", hp.epochs);
    hp.seed = j.value("seed", hp.seed);
    hp.share_params = j.value("share_params", hp.share_params);
    hp.residual = parse_residual_mode(j.value("residual", residual_mode_name(hp.residual)));
    hp.squared_norm = j.value("squared_norm", hp.squared_norm);
    return hp;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path,
                     const MinMaxScaler* scaler) {
    if (!params.all_finite())
        throw CheckpointError("refusing to save a checkpoint with non-finite parameters");

    json j;
    j["format"] = kFormat;
    j["ablation"] = ablation_name(params.ablation);
    j["n_features"] = params.n_features;
    j["hyperparams"] = hyperparams_to_json(params.hp);
    if (scaler != nullptr) {
        j["scaler"]["lo"] = scaler->lo;
        j["scaler"]["hi"] = scaler->hi;
    }
    json arrays = json::array();
    // named() is non-const only because it hands out mutable pointers for load.
    for (auto& [name, tensor] : const_cast<ModelParams&>(params).named())
        arrays.push_back(tensor_to_json(name, *tensor));
    j["params"] = std::move(arrays);

    std::ofstream out(path);
    if (!out) throw CheckpointError("cannot open '" + path.string() + "' for writing");
    out << j.dump(1) << "\n";
    if (!out) throw CheckpointError("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw CheckpointError("checkpoint '" + path.string() + "' is not valid JSON: " +
                              e.what());
    }

    try {
        if (j.value("format", "") != kFormat)
            throw CheckpointError("unrecognized checkpoint format in '" + path.string() + "'");

        Checkpoint cp;
        int n = j.at("n_features").get<int>();
        HyperParams hp = hyperparams_from_json(j.at("hyperparams"));
        Ablation ablation = parse_ablation(j.value("ablation", "full"));
        cp.params = ModelParams::init(n, hp, ablation);

        auto named = cp.params.named();
        std::set<std::string> pending;
        for (auto& [name, tensor] : named) pending.insert(name);

        for (const json& entry : j.at("params")) {
            std::string name = entry.at("name").get<std::string>();
            if (pending.erase(name) == 0)
                throw CheckpointError("unexpected or duplicate parameter '" + name + "'");
            auto shape = entry.at("shape").get<std::vector<int>>();
            auto data = entry.at("data").get<std::vector<double>>();
            Tensor* dst = nullptr;
            for (auto& [n2, t] : named)
                if (n2 == name) dst = t;
            if (shape != dst->shape())
                throw CheckpointError("parameter '" + name + "' has shape " +
                                      shape_string(shape) + ", expected " +
                                      shape_string(dst->shape()));
            if (data.size() != dst->size())
                throw CheckpointError("parameter '" + name + "' has wrong element count");
            std::copy(data.begin(), data.end(), dst->data().begin());
        }
        if (!pending.empty())
            throw CheckpointError("checkpoint is missing parameter '" + *pending.begin() + "'");
        if (!cp.params.all_finite())
            throw CheckpointError("checkpoint contains non-finite parameters");

        if (j.contains("scaler")) {
            MinMaxScaler sc;
            sc.lo = j["scaler"].at("lo").get<std::vector<double>>();
            sc.hi = j["scaler"].at("hi").get<std::vector<double>>();
            if (sc.lo.size() != static_cast<std::size_t>(n) || sc.hi.size() != sc.lo.size())
                throw CheckpointError("scaler bounds do not match the feature count");
            cp.scaler = std::move(sc);
        }
        return cp;
    } catch (const json::exception& e) {
        throw CheckpointError("checkpoint '" + path.string() + "' is incomplete: " + e.what());
    }
}

}  // namespace rpcate
