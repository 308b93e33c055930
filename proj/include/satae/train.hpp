#pragma once

// Per-sample SGD with a staged, warm-started alpha schedule. Each stage starts
// from the parameters the previous stage ended with.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "satae/data.hpp"
#include "satae/errors.hpp"
#include "satae/model.hpp"
#include "satae/nonlin.hpp"
#include "satae/random.hpp"
#include "satae/text.hpp"

namespace satae {

struct AlphaStage {
    double alpha = 0.0;
    int epochs = 1;

    friend bool operator==(const AlphaStage&, const AlphaStage&) = default;
};

inline double round_significant(double v, int digits) {
    std::array<char, 40> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::general, digits);
    if (ec != std::errc{}) return v;
    double out = v;
    std::from_chars(buf.data(), end, out);
    return out;
}

/// alpha = 0, step, 2*step, ..., alpha_max; `epochs` each.
inline std::vector<AlphaStage> annealing_schedule(double alpha_max, double step, int epochs) {
    if (!(alpha_max >= 0.0) || epochs < 1) {
        throw std::invalid_argument("annealing schedule needs alpha_max >= 0 and epochs >= 1");
    }
    if (alpha_max == 0.0) return {{0.0, epochs}};
    if (!(step > 0.0)) throw std::invalid_argument("annealing step must be positive");
    const auto stages = static_cast<int>(std::llround(alpha_max / step));
    std::vector<AlphaStage> out;
    for (int s = 0; s <= stages; ++s) {
        // 3 * 0.1 is 0.30000000000000004; keep 15 significant digits so stages
        // land on the decimal values a user would write.
        out.push_back({std::min(alpha_max, round_significant(static_cast<double>(s) * step, 15)), epochs});
    }
    if (out.back().alpha < alpha_max) out.push_back({alpha_max, epochs});
    return out;
}

struct TrainConfig {
    double lr = 0.05;
    std::vector<AlphaStage> alpha_schedule = annealing_schedule(1.0, 0.1, 30);
    std::optional<int> reproject_every;  // nullopt: never reproject
    bool tied = false;
    std::uint64_t seed = 0;
    double init_scale = 0.05;
    bool batch_order = true;  // reshuffle every epoch
    bool dec_bias = true;     // train B^d; when false it stays zero
    NormMode norm_mode = NormMode::per_dim;

    /// Defaults that depend on the activation: satlin trains tied and never
    /// reprojects; shrink and relu reproject the decoder every 10 updates.
    static TrainConfig defaults_for(NonlinKind kind) {
        TrainConfig cfg;
        cfg.tied = kind == NonlinKind::satlin;
        if (kind == NonlinKind::shrink || kind == NonlinKind::relu) cfg.reproject_every = 10;
        return cfg;
    }

    void validate() const {
        if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("lr must be finite and >= 0");
        if (!(init_scale >= 0.0)) throw std::invalid_argument("init_scale must be >= 0");
        if (alpha_schedule.empty()) throw std::invalid_argument("alpha_schedule is empty");
        for (std::size_t i = 0; i < alpha_schedule.size(); ++i) {
            const auto& st = alpha_schedule[i];
            if (!(st.alpha >= 0.0) || !std::isfinite(st.alpha)) throw std::invalid_argument("alpha must be >= 0");
            if (st.epochs < 1) throw std::invalid_argument("every stage needs at least one epoch");
            if (i > 0 && st.alpha < alpha_schedule[i - 1].alpha) {
                throw std::invalid_argument("alpha_schedule must be nondecreasing");
            }
        }
        if (reproject_every && *reproject_every < 1) {
            throw std::invalid_argument("reproject_every must be a positive integer");
        }
        if (reproject_every && tied) {
            throw TiedModeReprojection("decoder reprojection is not available with tied weights");
        }
    }
};

struct EpochRecord {
    double alpha = 0.0;
    int epoch = 0;  // global, 0-based
    double recon_mean = 0.0;
    double sat_mean = 0.0;
    double sat_frac = 0.0;

    friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

using TrainLog = std::vector<EpochRecord>;

inline std::string train_log_csv(const TrainLog& log) {
    std::string out = "alpha,epoch,recon_mean,sat_mean,sat_frac\n";
    for (const auto& r : log) {
        out += format_double(r.alpha) + ',' + std::to_string(r.epoch) + ',' + format_double(r.recon_mean) + ',' +
               format_double(r.sat_mean) + ',' + format_double(r.sat_frac) + '\n';
    }
    return out;
}

/// Uniform weights in [-init_scale, init_scale], zero biases.
inline ModelParams init_params(Index d, Index d_h, const TrainConfig& cfg) {
    if (d < 1 || d_h < 1) throw DimensionMismatch("init_params needs d, d_h >= 1");
    auto rng = make_engine(cfg.seed, Stream::init);
    std::uniform_real_distribution<double> u(-cfg.init_scale, cfg.init_scale);
    const auto draw = [&](Index rows, Index cols) {
        Matrix m(rows, cols);
        for (Index r = 0; r < rows; ++r)
            for (Index c = 0; c < cols; ++c) m(r, c) = cfg.init_scale == 0.0 ? 0.0 : u(rng);
        return m;
    };
    Matrix enc = draw(d_h, d);
    if (cfg.tied) {
        return ModelParams::tied(std::move(enc), Vector::Zero(d_h), Vector::Zero(d));
    }
    Matrix dec = draw(d, d_h);
    return ModelParams::untied(std::move(enc), Vector::Zero(d_h), std::move(dec), Vector::Zero(d));
}

/// Rescales every decoder column to unit L2 norm; near-zero columns are left alone.
inline ModelParams reproject_decoder(ModelParams p) {
    if (p.is_tied()) {
        throw TiedModeReprojection("cannot reproject the decoder of a tied model");
    }
    Matrix w = p.dec_weight();
    for (Index c = 0; c < w.cols(); ++c) {
        const double norm = w.col(c).norm();
        if (norm >= 1e-12) w.col(c) /= norm;
    }
    p.set_dec_weight(std::move(w));
    return p;
}

struct EpochResult {
    ModelParams params;
    EpochRecord record;
    std::uint64_t update_counter = 0;
};

/// One pass of per-sample SGD. `epoch_index` selects the shuffle stream; the
/// update counter is global so reprojection cadence spans epoch boundaries.
/// Epoch statistics are accumulated from each sample's forward pass just
/// before its update.
inline EpochResult sgd_epoch(ModelParams p, const Nonlinearity& f, double alpha, const Dataset& data,
                             const TrainConfig& cfg, std::uint64_t update_counter, int epoch_index = 0) {
    if (data.size() < 1) throw EmptyDataset("sgd_epoch needs data");
    if (data.dim() != p.input_dim()) throw DimensionMismatch("data dimension does not match the model");
    if (cfg.reproject_every && p.is_tied()) {
        throw TiedModeReprojection("decoder reprojection is not available with tied weights");
    }
    check_alpha(f, alpha);

    std::vector<Index> order(static_cast<std::size_t>(data.size()));
    std::iota(order.begin(), order.end(), Index{0});
    if (cfg.batch_order) {
        auto rng = make_engine(cfg.seed, Stream::shuffle, static_cast<std::uint64_t>(epoch_index));
        std::shuffle(order.begin(), order.end(), rng);
    }

    const bool track_saturation = f.has_saturation();
    const auto sat = track_saturation ? f.saturation_set() : SaturationSet{};
    double recon_sum = 0.0;
    double sat_sum = 0.0;
    std::uint64_t saturated_units = 0;

    for (Index idx : order) {
        const Vector x = data.samples.row(idx).transpose();
        const Vector z = pre_activation(p, x);
        const Vector h = apply(f, z);
        const Vector r = decode(p, h) - x;
        const double recon = 0.5 * r.squaredNorm();
        const double penalty = track_saturation ? sat_penalty_from_pre(f, z) : 0.0;
        if (!std::isfinite(recon) || !std::isfinite(penalty)) {
            throw NonFiniteLoss("non-finite loss at alpha=" + format_double(alpha) + ", epoch " +
                                std::to_string(epoch_index) + ", update " + std::to_string(update_counter));
        }
        recon_sum += recon;
        sat_sum += penalty;
        if (track_saturation) {
            for (Index i = 0; i < z.size(); ++i) saturated_units += sat.contains(z[i]) ? 1 : 0;
        }

        GradRecord g = loss_grad(p, f, alpha, x);
        if (!cfg.dec_bias) g.dec_bias.setZero();
        p.apply_gradient(g, cfg.lr);
        ++update_counter;
        if (cfg.reproject_every && update_counter % static_cast<std::uint64_t>(*cfg.reproject_every) == 0) {
            p = reproject_decoder(std::move(p));
        }
    }

    const double n = static_cast<double>(data.size());
    EpochResult out;
    out.record.alpha = alpha;
    out.record.epoch = epoch_index;
    out.record.recon_mean = recon_sum / n;
    out.record.sat_mean = sat_sum / n;
    out.record.sat_frac = static_cast<double>(saturated_units) / (n * static_cast<double>(p.hidden_dim()));
    out.update_counter = update_counter;
    out.params = std::move(p);
    return out;
}

struct StageSnapshot {
    std::size_t stage = 0;
    double alpha = 0.0;
    const ModelParams& params;
};

struct TrainResult {
    ModelParams params;
    TrainLog log;
};

/// Runs the stages of cfg.alpha_schedule in order from init_params(). The
/// optional observer sees the parameters at the end of every stage.
inline TrainResult train(const Nonlinearity& f, const Dataset& data, Index d_h, const TrainConfig& cfg,
                         const std::function<void(const StageSnapshot&)>& on_stage_end = {},
                         std::optional<ModelParams> start = std::nullopt) {
    cfg.validate();
    if (f.kind() == NonlinKind::tabulated) {
        throw std::invalid_argument("training supports the closed-form activations only");
    }
    TrainResult out;
    out.params = start ? std::move(*start) : init_params(data.dim(), d_h, cfg);
    if (out.params.input_dim() != data.dim() || out.params.hidden_dim() != d_h) {
        throw DimensionMismatch("starting parameters do not match data and hidden size");
    }
    if (out.params.is_tied() != cfg.tied) {
        throw std::invalid_argument("starting parameters disagree with cfg.tied");
    }
    std::uint64_t counter = 0;
    int epoch = 0;
    for (std::size_t s = 0; s < cfg.alpha_schedule.size(); ++s) {
        const auto& stage = cfg.alpha_schedule[s];
        for (int e = 0; e < stage.epochs; ++e, ++epoch) {
            auto res = sgd_epoch(std::move(out.params), f, stage.alpha, data, cfg, counter, epoch);
            out.params = std::move(res.params);
            counter = res.update_counter;
            out.log.push_back(res.record);
        }
        if (on_stage_end) on_stage_end(StageSnapshot{s, stage.alpha, out.params});
    }
    return out;
}

}  // namespace satae
