// Acceptance run: one PASS/FAIL line per check, exit status 1 if any fail.
//
//   acceptance [path/to/satae]
//
// The MNIST check reads SATAE_MNIST_IDX (default: data/mnist5k-images-idx3-ubyte
// under the source tree; see tools/fetch_mnist5k.py).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "oracles.hpp"
#include "satae/satae.hpp"

using namespace satae;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(const std::string& id, const std::string& name, const std::function<Outcome()>& check) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = check();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failures;
    std::printf("%s %-3s %-40s %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id.c_str(), name.c_str(), o.detail.c_str(),
                secs);
    std::fflush(stdout);
}

std::string num(double v) {
    std::ostringstream s;
    s.precision(4);
    s << v;
    return s.str();
}

double elapsed_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Matrix random_matrix(std::mt19937_64& rng, Index r, Index c, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    return Matrix::NullaryExpr(r, c, [&] { return u(rng); });
}

// ---------------------------------------------------------------------------

Outcome gradient_check() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(101);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        const auto c = oracle::random_kink_free_case(rng);
        const auto g = loss_grad(c.params, c.activation, c.alpha, c.x);
        const auto fd = oracle::fd_gradient(c.params, c.activation, c.alpha, c.x);
        worst = std::max({worst, oracle::max_relative_error(g.enc_weight, fd.enc_weight),
                          oracle::max_relative_error(g.enc_bias, fd.enc_bias),
                          oracle::max_relative_error(g.dec_weight, fd.dec_weight),
                          oracle::max_relative_error(g.dec_bias, fd.dec_bias)});
    }
    const double secs = elapsed_since(t0);
    return {worst < 1e-6 && secs < 60.0, "max rel err " + num(worst) + " (< 1e-6), " + num(secs) + " s (< 60)"};
}

Outcome l1_equivalence() {
    std::mt19937_64 rng(102);
    std::uniform_int_distribution<int> dim(1, 20);
    std::uniform_real_distribution<double> width(0.1, 2.0);
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const Index d = dim(rng);
        const Index d_h = dim(rng);
        const auto p = ModelParams::untied(random_matrix(rng, d_h, d, 2.0), random_matrix(rng, d_h, 1),
                                           random_matrix(rng, d, d_h), random_matrix(rng, d, 1));
        const Vector x = random_matrix(rng, d, 1, 2.0);
        const Nonlinearity f = t % 2 == 0 ? Nonlinearity::shrink(width(rng)) : Nonlinearity::relu();
        // L1 norm of the activations, from the activation definition itself.
        const Vector z = p.enc_weight() * x + p.enc_bias();
        double l1 = 0.0;
        for (Index i = 0; i < d_h; ++i) {
            const double h = f.kind() == NonlinKind::relu ? std::max(z[i], 0.0)
                                                          : (z[i] > 0 ? 1.0 : -1.0) * std::max(std::abs(z[i]) - f.width(), 0.0);
            l1 += std::abs(h);
        }
        worst = std::max(worst, std::abs(sat_penalty(p, f, x) - l1));
    }
    return {worst <= 1e-12, "max |sat_penalty - L1| " + num(worst) + " (<= 1e-12) over 1000 cases"};
}

Outcome toy_contrast() {
    const auto t0 = std::chrono::steady_clock::now();
    const Dataset data = normalize(gen_toy({ToyKind::arc, 500, 0.0, 7}));
    const RowMatrix on = apply_normalization(data, gen_toy({ToyKind::arc, 500, 0.0, 8}).samples);
    const RowMatrix off = apply_normalization(data, uniform_box(500, 2, -1.0, 1.0, 9).samples);
    const auto f = Nonlinearity::shrink(0.01);
    auto cfg = TrainConfig::defaults_for(NonlinKind::shrink);
    cfg.alpha_schedule = annealing_schedule(0.3, 0.1, 30);
    cfg.seed = 1;
    std::optional<ModelParams> unregularized;
    const auto res = train(f, data, 10, cfg, [&](const StageSnapshot& s) {
        if (s.alpha == 0.0) unregularized = s.params;
    });
    const double trained = contrast_ratio(res.params, f, on, off);
    const double base = contrast_ratio(*unregularized, f, on, off);
    const double secs = elapsed_since(t0);
    return {trained > base && trained >= 5.0 && secs < 120.0,
            "contrast " + num(trained) + " vs alpha=0 " + num(base) + " (need > alpha=0 and >= 5), " + num(secs) +
                " s"};
}

Outcome binary_minimizer() {
    const Index d = 5;
    RowMatrix x(Index{1} << d, d);
    for (Index r = 0; r < x.rows(); ++r)
        for (Index c = 0; c < d; ++c) x(r, c) = (r >> c) & 1 ? 1.0 : -1.0;
    const auto data = make_dataset(x, "cube");
    const auto f = Nonlinearity::satlin(1.0);
    const auto start = ModelParams::untied(10.0 * Matrix::Identity(d, d), Vector::Zero(d), Matrix::Identity(d, d),
                                           Vector::Zero(d));
    const double total = loss(start, f, 1.0, data.samples).total;
    auto cfg = TrainConfig::defaults_for(NonlinKind::satlin);
    cfg.tied = false;
    cfg.alpha_schedule = {{1.0, 5}};
    const auto res = train(f, data, d, cfg, {}, start);
    const double moved = std::max({(res.params.enc_weight() - start.enc_weight()).cwiseAbs().maxCoeff(),
                                   (res.params.enc_bias() - start.enc_bias()).cwiseAbs().maxCoeff(),
                                   (res.params.dec_weight() - start.dec_weight()).cwiseAbs().maxCoeff(),
                                   (res.params.dec_bias() - start.dec_bias()).cwiseAbs().maxCoeff()});
    return {total <= 1e-12 && moved <= 1e-8,
            "loss " + num(total) + " (<= 1e-12), max param change " + num(moved) + " (<= 1e-8)"};
}

Outcome quadratic_growth() {
    // The encoder reads only x_1; x* = (1, 0) reconstructs exactly and v = e_2 is a null direction.
    const auto f = Nonlinearity::satlin(1.0);
    Matrix we(1, 2);
    we << 10.0, 0.0;
    Matrix wd(2, 1);
    wd << 1.0, 0.0;
    const auto p = ModelParams::untied(we, Vector::Zero(1), wd, Vector::Zero(2));
    Vector xs(2);
    xs << 1.0, 0.0;
    double worst = std::abs(recon_energy(p, f, xs));
    for (double scale : {1.0, -2.5}) {
        const Vector v = scale * Vector::Unit(2, 1);
        for (double t : {0.1, 1.0, 10.0}) {
            worst = std::max(worst, std::abs(recon_energy(p, f, xs + t * v) - 0.5 * t * t * v.squaredNorm()));
        }
    }
    return {worst <= 1e-10, "max |E - t^2|v|^2/2| " + num(worst) + " (<= 1e-10)"};
}

Outcome pca_sanity() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> g(0.0, 1.0);
    const Index d = 10;
    const Matrix q = Eigen::HouseholderQR<Matrix>(Matrix::NullaryExpr(d, d, [&] { return g(rng); })).householderQ();
    Vector sd(d);
    for (Index i = 0; i < d; ++i) sd[i] = std::sqrt(8.0 / std::pow(2.0, static_cast<double>(i)));
    RowMatrix x(2000, d);
    for (Index r = 0; r < x.rows(); ++r) {
        const Vector z = Vector::NullaryExpr(d, [&] { return g(rng); }).cwiseProduct(sd);
        x.row(r) = (q * z).transpose();
    }
    const auto data = make_dataset(x, "gauss");
    auto cfg = TrainConfig::defaults_for(NonlinKind::linear);
    cfg.alpha_schedule = {{0.0, 1500}};
    cfg.lr = 0.001;
    cfg.init_scale = 0.1;
    cfg.seed = 5;
    const auto res = train(Nonlinearity::linear(), data, 3, cfg);

    // Oracle: top-3 eigenvectors of the sample covariance.
    const RowMatrix centred = x.rowwise() - x.colwise().mean();
    const Matrix cov = centred.transpose() * centred / static_cast<double>(x.rows());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    const Matrix top = eig.eigenvectors().rightCols(3);
    const Matrix qa = Eigen::HouseholderQR<Matrix>(res.params.dec_weight()).householderQ() * Matrix::Identity(d, 3);
    const Eigen::JacobiSVD<Matrix> svd(qa.transpose() * top);
    const double smallest = std::min(1.0, svd.singularValues().minCoeff());
    const double angle = std::acos(smallest);
    const double secs = elapsed_since(t0);
    return {angle < 1e-2 && secs < 60.0, "max principal angle " + num(angle) + " rad (< 1e-2), " + num(secs) + " s"};
}

Outcome numeric_comp_satlin() {
    const auto f = Nonlinearity::satlin(1.0);
    const auto grid = UniformGrid::over(-3.0, 3.0, 0.01);
    const auto t = numeric_comp([&f](double z) { return f.eval(z); }, [&f](double z) { return f.deriv(z); }, grid);
    double tail = 0.0;
    double peak = 0.0;
    for (std::size_t k = 0; k < grid.size; ++k) {
        const double z = grid.at(k);
        if (std::abs(z) >= 1.0 - 1e-12) tail = std::max(tail, t.comp(z));
        peak = std::max(peak, t.comp(z));
    }
    double shape = 0.0;
    for (std::size_t k = 0; k < grid.size; ++k) {
        const double z = grid.at(k);
        shape = std::max(shape, std::abs(t.comp(z) / peak - std::max(1.0 - std::abs(z), 0.0)));
    }
    return {tail <= 1e-3 && shape <= 1e-3,
            "max f_c on |z|>=1 " + num(tail) + " (<= 1e-3), peak-normalized shape error " + num(shape) + " (<= 1e-3)"};
}

Outcome numeric_comp_cubic() {
    const auto t = numeric_comp([](double x) { return x * x * x; }, [](double x) { return 3.0 * x * x; },
                                UniformGrid::over(-3.0, 3.0, 0.01));
    const double fprime0 = std::abs(3.0 * 0.0 * 0.0);
    return {t.comp(0.0) > 0.0 && fprime0 == 0.0, "f_c(0) " + num(t.comp(0.0)) + " (> 0) with |f'(0)| = 0"};
}

Outcome cae_comparator() {
    std::mt19937_64 rng(108);
    double worst = 0.0;
    for (int t = 0; t < 200; ++t) {
        const auto c = oracle::random_kink_free_case(rng);
        const double fd = oracle::jacobian_frobenius_fd(c.params, c.activation, c.x);
        worst = std::max(worst, std::abs(cae_penalty(c.params, c.activation, c.x) - fd));
    }
    bool linear_exact = true;
    for (int t = 0; t < 100; ++t) {
        const Matrix we = random_matrix(rng, 4 + t % 7, 3 + t % 5);
        const auto p = ModelParams::untied(we, random_matrix(rng, we.rows(), 1), Matrix::Zero(we.cols(), we.rows()),
                                           Vector::Zero(we.cols()));
        linear_exact = linear_exact &&
                       cae_penalty(p, Nonlinearity::linear(), random_matrix(rng, we.cols(), 1)) == we.squaredNorm();
    }
    return {worst <= 1e-4 && linear_exact, "max |CAE - FD Jacobian| " + num(worst) + " (<= 1e-4), linear exact: " +
                                               (linear_exact ? "yes" : "no")};
}

Outcome sparsification_toy() {
    const Dataset data = normalize(gen_toy({ToyKind::arc, 500, 0.0, 7}));
    const auto f = Nonlinearity::shrink(0.01);
    auto cfg = TrainConfig::defaults_for(NonlinKind::shrink);
    cfg.alpha_schedule = annealing_schedule(0.5, 0.1, 30);
    cfg.seed = 1;
    const auto res = train(f, data, 10, cfg);
    // sat_frac of the last epoch of the alpha = 0 and alpha = 0.5 stages, from the log.
    double at0 = -1.0;
    double at05 = -1.0;
    for (const auto& r : res.log) {
        if (r.alpha == 0.0) at0 = r.sat_frac;
        if (r.alpha == 0.5) at05 = r.sat_frac;
    }
    return {at05 > at0, "sat_frac " + num(at05) + " at alpha=0.5 vs " + num(at0) + " at alpha=0"};
}

fs::path mnist_path() {
    if (const char* env = std::getenv("SATAE_MNIST_IDX")) return env;
    return fs::path(SATAE_SOURCE_DIR) / "data" / "mnist5k-images-idx3-ubyte";
}

Outcome sparsification_mnist() {
    const fs::path path = mnist_path();
    if (!fs::exists(path)) return {false, "missing " + path.string() + " (run tools/fetch_mnist5k.py)"};
    const Dataset raw = load_idx(path);
    if (raw.size() != 5000) return {false, "expected 5000 images, found " + std::to_string(raw.size())};
    const Dataset data = normalize(raw, NormMode::global);
    const auto f = Nonlinearity::shrink(1.0);
    auto cfg = TrainConfig::defaults_for(NonlinKind::shrink);
    cfg.norm_mode = NormMode::global;
    cfg.lr = 0.001;
    cfg.alpha_schedule = annealing_schedule(1.0, 0.1, 3);
    cfg.seed = 1;
    const auto res = train(f, data, 100, cfg);
    const double frac = saturation_fraction(res.params, f, data);
    return {frac >= 0.5, "final saturation fraction " + num(frac) + " (>= 0.5), recon " +
                             num(res.log.back().recon_mean) + ", " + std::to_string(res.log.size()) + " epochs"};
}

Outcome format_round_trips() {
    std::mt19937_64 rng(110);
    std::vector<std::string> broken;
    const auto same = [&](const char* what, const io::Bytes& a, const io::Bytes& b) {
        if (a != b) broken.emplace_back(what);
    };
    // Model file, untied and tied.
    {
        const auto p = ModelParams::untied(random_matrix(rng, 7, 5), random_matrix(rng, 7, 1),
                                           random_matrix(rng, 5, 7), random_matrix(rng, 5, 1));
        const auto bytes = serialize_model(p, Nonlinearity::shrink(0.37));
        const auto back = deserialize_model(bytes);
        same("model", serialize_model(back.params, back.activation), bytes);
        const auto t = ModelParams::tied(random_matrix(rng, 3, 4), random_matrix(rng, 3, 1), random_matrix(rng, 4, 1));
        const auto tb = serialize_model(t, Nonlinearity::satlin(1.5));
        const auto tback = deserialize_model(tb);
        same("tied model", serialize_model(tback.params, tback.activation), tb);
    }
    // Native dataset cache, raw and normalized.
    {
        const auto ds = gen_toy({ToyKind::sine, 64, 0.05, 3});
        for (const auto& d : {ds, normalize(ds)}) {
            const auto bytes = serialize_dataset(d);
            same("dataset cache", serialize_dataset(deserialize_dataset(bytes)), bytes);
        }
    }
    // IDX and CIFAR fixtures built byte by byte.
    {
        io::Bytes idx = {0, 0, 8, 3, 0, 0, 0, 3, 0, 0, 0, 2, 0, 0, 0, 3};
        for (int i = 0; i < 18; ++i) idx.push_back(static_cast<std::uint8_t>((i * 37 + 11) % 256));
        same("IDX", serialize_idx(parse_idx(idx), 2, 3), idx);
        io::Bytes cifar;
        std::vector<std::uint8_t> labels;
        for (int r = 0; r < 3; ++r) {
            labels.push_back(static_cast<std::uint8_t>(r + 3));
            cifar.push_back(labels.back());
            for (std::size_t j = 0; j < kCifarPixels; ++j) cifar.push_back(static_cast<std::uint8_t>((j * 7 + r * 13) % 256));
        }
        same("CIFAR", serialize_cifar_batch(parse_cifar_batch(cifar), labels), cifar);
    }
    // PGM and PPM.
    {
        PnmImage gray{5, 3, 1, {}};
        PnmImage rgb{2, 4, 3, {}};
        for (int i = 0; i < 15; ++i) gray.pixels.push_back(static_cast<std::uint8_t>(i * 17));
        for (int i = 0; i < 24; ++i) rgb.pixels.push_back(static_cast<std::uint8_t>(255 - i * 9));
        const auto gb = encode_pnm(gray);
        const auto rb = encode_pnm(rgb);
        if (std::string(gb.begin(), gb.begin() + 11) != "P5\n5 3\n255\n") broken.emplace_back("PGM header");
        if (std::string(rb.begin(), rb.begin() + 11) != "P6\n2 4\n255\n") broken.emplace_back("PPM header");
        same("PGM", encode_pnm(decode_pnm(gb)), gb);
        same("PPM", encode_pnm(decode_pnm(rb)), rb);
    }
    std::string detail = "model, tied model, dataset cache, IDX, CIFAR, PGM, PPM";
    if (!broken.empty()) {
        detail = "mismatch:";
        for (const auto& b : broken) detail += " " + b;
    }
    return {broken.empty(), detail};
}

Outcome cli_determinism(const std::string& cli) {
    if (cli.empty() || !fs::exists(cli)) return {false, "satae executable not available"};
    const fs::path dir = fs::temp_directory_path() / ("satae_accept_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    const auto run = [&](const std::string& args) {
        const std::string cmd = "\"" + cli + "\" " + args + " > \"" + (dir / "cli.log").string() + "\" 2>&1";
        return std::system(cmd.c_str());
    };
    const std::string data = (dir / "arc.satd").string();
    int rc = run("gen-data --kind arc --n 300 --seed 11 --noise 0.02 --out \"" + data + "\"");
    for (const char* out : {"a", "b"}) {
        rc |= run("train --data \"" + data + "\" --activation shrink --lambda 0.01 --hidden 12 --alpha-max 0.5 "
                  "--epochs-per-stage 4 --seed 4 --out-dir \"" + (dir / out).string() + "\"");
    }
    Outcome o;
    if (rc != 0) {
        o = {false, "a satae run exited non-zero"};
    } else {
        const auto a = io::read_file(dir / "a" / "model.satae");
        const auto b = io::read_file(dir / "b" / "model.satae");
        o = {a == b && !a.empty(), std::string("two train runs, model files ") + (a == b ? "identical" : "differ") +
                                       " (" + std::to_string(a.size()) + " bytes)"};
    }
    fs::remove_all(dir);
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const std::string cli = argc > 1 ? argv[1] : "";
    report("1", "gradient vs finite differences", gradient_check);
    report("2", "L1 equivalence (shrink, relu)", l1_equivalence);
    report("3", "toy manifold contrast ratio", toy_contrast);
    report("4", "binary identity global minimizer", binary_minimizer);
    report("5", "quadratic energy growth", quadratic_growth);
    report("6", "linear AE finds principal subspace", pca_sanity);
    report("7a", "numeric complement, satlin", numeric_comp_satlin);
    report("7b", "numeric complement, cubic plateau", numeric_comp_cubic);
    report("8", "CAE penalty vs Jacobian", cae_comparator);
    report("9a", "annealing sparsifies (toy arc)", sparsification_toy);
    report("9b", "annealing sparsifies (MNIST 5k)", sparsification_mnist);
    report("10", "byte-exact format round trips", format_round_trips);
    report("11", "deterministic train command", [&] { return cli_determinism(cli); });
    std::printf("%d check(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
