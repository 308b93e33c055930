#pragma once

// JSON form of TrainConfig. Keys: lr, alpha_schedule, reproject_every, tied,
// seed, init_scale, batch_order, dec_bias, norm_mode. Absent keys keep the
// activation-dependent defaults; unknown keys are rejected.

#include <set>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "satae/data.hpp"
#include "satae/nonlin.hpp"
#include "satae/train.hpp"

namespace satae {

using Json = nlohmann::ordered_json;

inline Json to_json(const TrainConfig& cfg) {
    Json j;
    j["lr"] = cfg.lr;
    Json stages = Json::array();
    for (const auto& s : cfg.alpha_schedule) stages.push_back({{"alpha", s.alpha}, {"epochs", s.epochs}});
    j["alpha_schedule"] = stages;
    j["reproject_every"] = cfg.reproject_every ? Json(*cfg.reproject_every) : Json(nullptr);
    j["tied"] = cfg.tied;
    j["seed"] = cfg.seed;
    j["init_scale"] = cfg.init_scale;
    j["batch_order"] = cfg.batch_order;
    j["dec_bias"] = cfg.dec_bias;
    j["norm_mode"] = std::string(to_string(cfg.norm_mode));
    return j;
}

/// Overlays the keys present in `j` onto `base`.
inline TrainConfig merge_config(TrainConfig base, const Json& j) {
    if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
    static const std::set<std::string> known = {"lr",         "alpha_schedule", "reproject_every",
                                                "tied",       "seed",           "init_scale",
                                                "batch_order", "dec_bias",      "norm_mode"};
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) throw std::invalid_argument("unknown train config key '" + key + "'");
    }
    try {
        if (j.contains("lr")) base.lr = j.at("lr").get<double>();
        if (j.contains("alpha_schedule")) {
            base.alpha_schedule.clear();
            for (const auto& s : j.at("alpha_schedule")) {
                if (s.is_array()) {
                    base.alpha_schedule.push_back({s.at(0).get<double>(), s.at(1).get<int>()});
                } else {
                    base.alpha_schedule.push_back({s.at("alpha").get<double>(), s.at("epochs").get<int>()});
                }
            }
        }
        if (j.contains("reproject_every")) {
            const auto& r = j.at("reproject_every");
            base.reproject_every = r.is_null() ? std::nullopt : std::optional<int>(r.get<int>());
        }
        if (j.contains("tied")) base.tied = j.at("tied").get<bool>();
        if (j.contains("seed")) base.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("init_scale")) base.init_scale = j.at("init_scale").get<double>();
        if (j.contains("batch_order")) base.batch_order = j.at("batch_order").get<bool>();
        if (j.contains("dec_bias")) base.dec_bias = j.at("dec_bias").get<bool>();
        if (j.contains("norm_mode")) base.norm_mode = parse_norm_mode(j.at("norm_mode").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("train config: ") + e.what());
    }
    return base;
}

inline TrainConfig config_from_json(const Json& j, NonlinKind kind) {
    return merge_config(TrainConfig::defaults_for(kind), j);
}

}  // namespace satae
