// satae: batch front end for data generation, training and analysis.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#if __has_include(<CLI11.hpp>)
#include <CLI11.hpp>
#else
#include <CLI/CLI.hpp>
#endif
#include <openssl/evp.h>

#include "satae/analysis.hpp"
#include "satae/config_io.hpp"
#include "satae/data.hpp"
#include "satae/model.hpp"
#include "satae/nonlin.hpp"
#include "satae/train.hpp"

namespace fs = std::filesystem;
using namespace satae;

namespace {

struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("SHA-256 failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

std::vector<double> split_numbers(const std::string& text, char sep, std::size_t expected, const char* what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, sep)) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError(std::string(what) + ": '" + item + "' is not a number");
        }
    }
    if (out.size() != expected) {
        throw UsageError(std::string(what) + " expects " + std::to_string(expected) + " values separated by '" +
                         sep + "'");
    }
    return out;
}

std::pair<Index, Index> parse_tile(const std::string& text) {
    const auto x = text.find('x');
    if (x == std::string::npos) throw UsageError("--tile expects RxC, e.g. 12x12");
    const auto v = split_numbers(text.substr(0, x) + ":" + text.substr(x + 1), ':', 2, "--tile");
    if (v[0] < 1 || v[1] < 1 || v[0] != std::floor(v[0]) || v[1] != std::floor(v[1])) {
        throw UsageError("--tile needs positive integers");
    }
    return {static_cast<Index>(v[0]), static_cast<Index>(v[1])};
}

std::uint32_t be32(const io::Bytes& b, std::size_t at) {
    return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) | b[at + 3];
}

struct LoadedData {
    Dataset ds;
    std::string format;
    std::string sha256;
    Index rows = 0;  // image geometry when known
    Index cols = 0;
    Index channels = 1;
};

// Native cache, IDX (u8, 3-D) or CIFAR-10 binary batch, told apart by content.
LoadedData load_any(const fs::path& path, std::string format) {
    const io::Bytes bytes = io::read_file(path);
    LoadedData out;
    out.sha256 = sha256_hex(bytes);
    if (format == "auto") {
        if (bytes.size() >= 8 && std::string(bytes.begin(), bytes.begin() + 8) == kDatasetMagic) {
            format = "satd";
        } else if (bytes.size() >= 4 && be32(bytes, 0) == kIdxU8Tensor3) {
            format = "idx";
        } else if (!bytes.empty() && bytes.size() % kCifarRecord == 0) {
            format = "cifar";
        } else {
            throw BadMagic(path.string() + " is not a dataset cache, IDX file or CIFAR batch");
        }
    }
    out.format = format;
    const std::string name = path.filename().string();
    if (format == "satd") {
        out.ds = deserialize_dataset(bytes, "satd:" + name);
    } else if (format == "idx") {
        out.ds = parse_idx(bytes, "idx:" + name);
        out.rows = be32(bytes, 8);
        out.cols = be32(bytes, 12);
    } else if (format == "cifar") {
        out.ds = parse_cifar_batch(bytes, "cifar:" + name);
        out.rows = 32;
        out.cols = 32;
        out.channels = 3;
    } else {
        throw UsageError("unknown --format '" + format + "'");
    }
    return out;
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
    std::string kind = "arc";
    Index n = 500;
    std::uint64_t seed = 0;
    double noise = 0.0;
    std::string from;
    std::string format = "auto";
    bool binarize = false;
    Index patches = 0;
    Index patch_size = 8;
    std::string out;
};

void cmd_gen_data(const GenDataArgs& a) {
    Dataset ds;
    if (a.from.empty()) {
        if (a.n < 1) throw UsageError("--n must be positive");
        if (!(a.noise >= 0.0)) throw UsageError("--noise must be >= 0");
        ds = gen_toy({parse_toy_kind(a.kind), a.n, a.noise, a.seed});
    } else {
        auto loaded = load_any(a.from, a.format);
        ds = std::move(loaded.ds);
        if (a.patches > 0) {
            if (loaded.rows == 0) throw UsageError("--patches needs IDX or CIFAR input");
            ds = extract_patches(ds, loaded.rows, loaded.cols, a.patch_size, a.patches, a.seed, loaded.channels);
        }
    }
    if (a.binarize) ds = binarize(ds);
    save_dataset(a.out, ds);
    std::cout << "wrote " << a.out << ": n=" << ds.size() << " d=" << ds.dim() << "\n";
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string data;
    std::string format = "auto";
    std::string config;
    std::string out_dir = ".";
    std::string activation = "shrink";
    double lambda = 1.0;
    Index hidden = 10;
    bool no_normalize = false;
    // Overrides; unset means "keep config / default".
    std::optional<double> alpha_max;
    double alpha_step = 0.1;
    std::optional<int> epochs_per_stage;
    std::optional<double> lr;
    std::optional<std::uint64_t> seed;
    std::optional<int> reproject_every;
    bool no_reproject = false;
    std::optional<bool> tied;
    std::optional<double> init_scale;
    std::optional<std::string> norm_mode;
};

TrainConfig effective_config(const TrainArgs& a, NonlinKind kind) {
    TrainConfig cfg = TrainConfig::defaults_for(kind);
    if (!a.config.empty()) {
        const io::Bytes raw = io::read_file(a.config);
        Json j;
        try {
            j = Json::parse(raw.begin(), raw.end());
        } catch (const nlohmann::json::exception& e) {
            throw UsageError("config " + a.config + ": " + e.what());
        }
        cfg = merge_config(cfg, j);
    }
    if (a.alpha_max || a.epochs_per_stage) {
        const int epochs = a.epochs_per_stage.value_or(cfg.alpha_schedule.front().epochs);
        const double top = a.alpha_max.value_or(cfg.alpha_schedule.back().alpha);
        cfg.alpha_schedule = annealing_schedule(top, a.alpha_step, epochs);
    }
    if (a.lr) cfg.lr = *a.lr;
    if (a.seed) cfg.seed = *a.seed;
    if (a.tied) {
        cfg.tied = *a.tied;
        if (cfg.tied) cfg.reproject_every.reset();
    }
    if (a.reproject_every) cfg.reproject_every = *a.reproject_every;
    if (a.no_reproject) cfg.reproject_every.reset();
    if (a.init_scale) cfg.init_scale = *a.init_scale;
    if (a.norm_mode) cfg.norm_mode = parse_norm_mode(*a.norm_mode);
    cfg.validate();
    return cfg;
}

void cmd_train(const TrainArgs& a) {
    const auto kind = parse_nonlin_kind(a.activation);
    const Nonlinearity f = Nonlinearity::from_kind(kind, a.lambda);
    if (a.hidden < 1) throw UsageError("--hidden must be positive");
    const TrainConfig cfg = effective_config(a, kind);

    const auto started = std::chrono::steady_clock::now();
    LoadedData loaded = load_any(a.data, a.format);
    Dataset data = loaded.ds;
    if (!data.normalized && !a.no_normalize) data = normalize(data, cfg.norm_mode);

    const TrainResult result = train(f, data, a.hidden, cfg);

    const fs::path dir(a.out_dir);
    fs::create_directories(dir);
    const fs::path model_path = dir / "model.satae";
    const fs::path log_path = dir / "log.csv";
    const fs::path data_path = dir / "train_data.satd";
    const fs::path manifest_path = dir / "manifest.json";
    const io::Bytes model_bytes = serialize_model(result.params, f);
    io::write_file(model_path, model_bytes);
    io::write_text(log_path, train_log_csv(result.log));
    save_dataset(data_path, data);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    Json m;
    m["config"] = to_json(cfg);
    m["activation"] = {{"kind", std::string(to_string(kind))}, {"lambda", f.width()}};
    m["hidden"] = a.hidden;
    m["dataset"] = {{"path", a.data},
                    {"format", loaded.format},
                    {"source_tag", loaded.ds.source_tag},
                    {"sha256", loaded.sha256},
                    {"n", data.size()},
                    {"d", data.dim()},
                    {"normalized", data.normalized}};
    m["seed"] = cfg.seed;
    m["artifacts"] = {{"model", model_path.string()},
                      {"model_sha256", sha256_hex(model_bytes)},
                      {"log", log_path.string()},
                      {"train_data", data_path.string()},
                      {"manifest", manifest_path.string()}};
    m["duration_seconds"] = seconds;
    io::write_text(manifest_path, m.dump(2) + "\n");

    const auto& last = result.log.back();
    std::cout << "trained " << result.log.size() << " epochs in " << format_double(seconds) << " s; final alpha="
              << format_double(last.alpha) << " recon=" << format_double(last.recon_mean)
              << " sat_frac=" << format_double(last.sat_frac) << "\n";
}

// ---------------------------------------------------------------------------

struct GridArgs {
    std::string model;
    std::string bounds = "-1:1:-1:1";
    int resolution = 256;
    bool log_scale = false;
    std::string out = "energy";
};

void cmd_energy_grid(const GridArgs& a) {
    const auto b = split_numbers(a.bounds, ':', 4, "--bounds");
    if (a.resolution < 2) throw UsageError("--resolution must be >= 2");
    if (!(b[0] < b[1]) || !(b[2] < b[3])) throw UsageError("--bounds must be xmin:xmax:ymin:ymax with min < max");
    const SavedModel saved = load_model(a.model);
    const auto g = energy_grid(saved.params, saved.activation, {b[0], b[1], b[2], b[3]}, a.resolution);
    io::write_text(a.out + ".csv", energy_grid_csv(g));
    save_pnm(a.out + ".pgm", energy_grid_image(g, a.log_scale));
    std::cout << "wrote " << a.out << ".csv and " << a.out << ".pgm (" << a.resolution << "x" << a.resolution
              << ")\n";
}

struct FilterArgs {
    std::string model;
    std::string tile;
    int channels = 1;
    std::string out;
};

void cmd_export_filters(const FilterArgs& a) {
    const auto [rows, cols] = parse_tile(a.tile);
    if (a.channels != 1 && a.channels != 3) throw UsageError("--channels must be 1 or 3");
    const SavedModel saved = load_model(a.model);
    const auto t = tile_filters(saved.params, rows, cols, a.channels);
    std::string out = a.out;
    if (out.empty()) out = a.channels == 3 ? "filters.ppm" : "filters.pgm";
    save_pnm(out, t.image);
    std::cout << "wrote " << out << ": " << t.grid_rows << "x" << t.grid_cols << " tiles, " << t.image.width << "x"
              << t.image.height << " pixels\n";
}

struct CompArgs {
    std::string fn;
    double lambda = 1.0;
    std::string range = "-3:3:0.01";
    std::string method = "auto";
    std::string out;
};

void cmd_comp_table(const CompArgs& a) {
    const auto r = split_numbers(a.range, ':', 3, "--range");
    const UniformGrid grid = UniformGrid::over(r[0], r[1], r[2]);
    if (a.method != "auto" && a.method != "exact" && a.method != "numeric") {
        throw UsageError("--method must be auto, exact or numeric");
    }
    const bool closed_form = a.fn == "shrink" || a.fn == "relu" || a.fn == "satlin";
    const bool exact = a.method == "exact" || (a.method == "auto" && closed_form);
    if (exact && !closed_form) throw UsageError("--fn " + a.fn + " has no closed-form penalty; use --method numeric");

    Nonlinearity f = Nonlinearity::linear();
    if (exact) {
        f = Nonlinearity::from_kind(parse_nonlin_kind(a.fn), a.lambda);
    } else if (a.fn == "cubic") {
        f = numeric_comp([](double x) { return x * x * x; }, [](double x) { return 3.0 * x * x; }, grid);
    } else if (a.fn == "linear" || closed_form) {
        const Nonlinearity g = a.fn == "linear" ? Nonlinearity::linear()
                                                : Nonlinearity::from_kind(parse_nonlin_kind(a.fn), a.lambda);
        f = numeric_comp([g](double x) { return g(x); }, [g](double x) { return g.deriv(x); }, grid);
    } else {
        throw UsageError("unknown --fn '" + a.fn + "' (shrink, relu, satlin, linear, cubic)");
    }
    const std::string csv = comp_table_csv(f, grid);
    if (a.out.empty()) {
        std::cout << csv;
    } else {
        io::write_text(a.out, csv);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Saturating auto-encoder toolkit"};
    app.require_subcommand(1);

    GenDataArgs gen;
    auto* g = app.add_subcommand("gen-data", "Write a toy manifold or convert IDX/CIFAR data to a dataset cache");
    g->add_option("--kind", gen.kind, "arc, sine or line");
    g->add_option("--n", gen.n, "Number of points");
    g->add_option("--seed", gen.seed, "Random seed");
    g->add_option("--noise", gen.noise, "Gaussian noise std added to toy points");
    g->add_option("--from", gen.from, "Convert this IDX, CIFAR or cache file instead");
    g->add_option("--format", gen.format, "Input format: auto, satd, idx, cifar");
    g->add_option("--patches", gen.patches, "Extract this many random square patches");
    g->add_option("--patch-size", gen.patch_size, "Patch side length");
    g->add_flag("--binarize", gen.binarize, "Threshold at 0.5 to -1/+1");
    g->add_option("--out", gen.out, "Output dataset cache")->required();

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train with the staged alpha schedule");
    t->add_option("--data", tr.data, "Dataset (cache, IDX or CIFAR batch)")->required();
    t->add_option("--format", tr.format, "Input format: auto, satd, idx, cifar");
    t->add_option("--config", tr.config, "JSON training config");
    t->add_option("--out-dir", tr.out_dir, "Directory for model.satae, log.csv and manifest.json");
    t->add_option("--activation", tr.activation, "shrink, relu, satlin or linear");
    t->add_option("--lambda", tr.lambda, "Activation width");
    t->add_option("--hidden", tr.hidden, "Number of hidden units");
    t->add_flag("--no-normalize", tr.no_normalize, "Train on the raw inputs");
    t->add_option("--alpha-max", tr.alpha_max, "Last alpha of the schedule (0: single unregularized stage)");
    t->add_option("--alpha-step", tr.alpha_step, "Alpha increment between stages");
    t->add_option("--epochs-per-stage", tr.epochs_per_stage, "Epochs in each stage");
    t->add_option("--lr", tr.lr, "Learning rate");
    t->add_option("--seed", tr.seed, "Seed for initialization and shuffling");
    t->add_option("--reproject-every", tr.reproject_every, "Renormalize decoder columns every N updates");
    t->add_flag("--no-reproject", tr.no_reproject, "Never renormalize decoder columns");
    t->add_option("--tied", tr.tied, "Tie the decoder to the encoder transpose (true/false)");
    t->add_option("--init-scale", tr.init_scale, "Half-width of the uniform weight initialization");
    t->add_option("--norm-mode", tr.norm_mode, "per_dim or global");

    GridArgs eg;
    auto* e = app.add_subcommand("energy-grid", "Evaluate reconstruction energy on a 2-D grid");
    e->add_option("--model", eg.model, "Model file")->required();
    e->add_option("--bounds", eg.bounds, "xmin:xmax:ymin:ymax");
    e->add_option("--resolution", eg.resolution, "Nodes per axis");
    e->add_flag("--log-scale", eg.log_scale, "Map log(1 + E - min) to gray levels");
    e->add_option("--out", eg.out, "Output prefix; writes PREFIX.csv and PREFIX.pgm");

    FilterArgs ef;
    auto* x = app.add_subcommand("export-filters", "Tile decoder columns into one image");
    x->add_option("--model", ef.model, "Model file")->required();
    x->add_option("--tile", ef.tile, "Tile size RxC")->required();
    x->add_option("--channels", ef.channels, "1 (PGM) or 3 (PPM)");
    x->add_option("--out", ef.out, "Output image");

    CompArgs ct;
    auto* c = app.add_subcommand("comp-table", "Tabulate the saturation penalty of an activation");
    c->add_option("--fn", ct.fn, "shrink, relu, satlin, linear or cubic")->required();
    c->add_option("--lambda", ct.lambda, "Activation width");
    c->add_option("--range", ct.range, "lo:hi:step");
    c->add_option("--method", ct.method, "auto, exact or numeric");
    c->add_option("--out", ct.out, "Output CSV (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& err) {
        return app.exit(err);
    } catch (const CLI::ParseError& err) {
        app.exit(err);
        return 2;
    }

    try {
        if (g->parsed()) cmd_gen_data(gen);
        if (t->parsed()) cmd_train(tr);
        if (e->parsed()) cmd_energy_grid(eg);
        if (x->parsed()) cmd_export_filters(ef);
        if (c->parsed()) cmd_comp_table(ct);
    } catch (const TiedModeReprojection& err) {
        std::cerr << "usage error: " << err.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& err) {
        std::cerr << "usage error: " << err.what() << "\n";
        return 2;
    } catch (const NonFiniteLoss& err) {
        std::cerr << "training diverged: " << err.what() << "\n";
        return 1;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
    return 0;
}
