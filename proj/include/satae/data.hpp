#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "satae/binary_io.hpp"
#include "satae/errors.hpp"
#include "satae/model.hpp"
#include "satae/random.hpp"

namespace satae {

/// Std below this is treated as a constant dimension by normalize().
inline constexpr double kDegenerateStd = 1e-12;

/// Row-per-sample data plus the statistics used to standardise it. Unnormalized
/// datasets carry identity statistics (mean 0, std 1).
struct Dataset {
    RowMatrix samples;
    Vector mean;
    Vector std;
    bool normalized = false;
    std::string source_tag;

    Index size() const { return samples.rows(); }
    Index dim() const { return samples.cols(); }

    // Dimensions that normalize() centred but did not scale.
    std::vector<bool> degenerate_dims() const {
        std::vector<bool> out(static_cast<std::size_t>(dim()), false);
        if (normalized) {
            for (Index j = 0; j < dim(); ++j) out[static_cast<std::size_t>(j)] = std[j] < kDegenerateStd;
        }
        return out;
    }
};

inline Dataset make_dataset(RowMatrix samples, std::string source_tag) {
    if (samples.rows() < 1 || samples.cols() < 1) {
        throw EmptyDataset("dataset '" + source_tag + "' has no samples");
    }
    Dataset ds;
    ds.mean = Vector::Zero(samples.cols());
    ds.std = Vector::Ones(samples.cols());
    ds.samples = std::move(samples);
    ds.source_tag = std::move(source_tag);
    return ds;
}

// ---------------------------------------------------------------------------
// Toy manifolds in [-1, 1]^2

enum class ToyKind { arc, sine, line_segment };

inline ToyKind parse_toy_kind(std::string_view name) {
    if (name == "arc") return ToyKind::arc;
    if (name == "sine") return ToyKind::sine;
    if (name == "line" || name == "line-segment" || name == "line_segment") return ToyKind::line_segment;
    throw std::invalid_argument("unknown toy manifold '" + std::string(name) + "'");
}

inline std::string_view to_string(ToyKind kind) {
    switch (kind) {
        case ToyKind::arc: return "arc";
        case ToyKind::sine: return "sine";
        case ToyKind::line_segment: return "line-segment";
    }
    return "unknown";
}

struct ToyManifoldSpec {
    ToyKind kind = ToyKind::arc;
    Index n = 500;
    double noise_std = 0.0;
    std::uint64_t seed = 0;
};

/// Point on the curve at parameter t in [0, 1].
///   arc:          three quarters of the circle of radius 0.8 about the origin
///   sine:         (s, 0.8 sin(pi s)) for s in [-1, 1]
///   line-segment: (-1,-1) to (1,1)
inline std::array<double, 2> toy_curve(ToyKind kind, double t) {
    switch (kind) {
        case ToyKind::arc: {
            const double theta = 1.5 * std::numbers::pi * t;
            return {0.8 * std::cos(theta), 0.8 * std::sin(theta)};
        }
        case ToyKind::sine: {
            const double s = 2.0 * t - 1.0;
            return {s, 0.8 * std::sin(std::numbers::pi * s)};
        }
        case ToyKind::line_segment: {
            const double s = 2.0 * t - 1.0;
            return {s, s};
        }
    }
    return {0.0, 0.0};
}

inline Dataset gen_toy(const ToyManifoldSpec& spec) {
    if (spec.n < 1) throw EmptyDataset("toy manifold needs n >= 1");
    if (!(spec.noise_std >= 0.0)) throw std::invalid_argument("noise_std must be non-negative");
    auto curve_rng = make_engine(spec.seed, Stream::data);
    auto noise_rng = make_engine(spec.seed, Stream::noise);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    RowMatrix x(spec.n, 2);
    for (Index i = 0; i < spec.n; ++i) {
        const auto pt = toy_curve(spec.kind, uniform(curve_rng));
        x(i, 0) = pt[0];
        x(i, 1) = pt[1];
        if (spec.noise_std > 0.0) {
            x(i, 0) += spec.noise_std * gauss(noise_rng);
            x(i, 1) += spec.noise_std * gauss(noise_rng);
        }
    }
    return make_dataset(std::move(x), "toy:" + std::string(to_string(spec.kind)));
}

/// n points uniform in the box [lo, hi]^d.
inline Dataset uniform_box(Index n, Index d, double lo, double hi, std::uint64_t seed) {
    auto rng = make_engine(seed, Stream::data);
    std::uniform_real_distribution<double> u(lo, hi);
    RowMatrix x(n, d);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < d; ++j) x(i, j) = u(rng);
    return make_dataset(std::move(x), "uniform-box");
}

// ---------------------------------------------------------------------------
// File loaders

inline constexpr std::uint32_t kIdxU8Tensor3 = 0x00000803;

/// IDX u8 image tensor (big-endian header), flattened to n x (rows*cols) in [0, 1].
inline Dataset parse_idx(std::span<const std::uint8_t> bytes, std::string tag = "idx") {
    io::ByteReader r(bytes, "idx file");
    const std::uint32_t magic = r.u32_be();
    if (magic != kIdxU8Tensor3) {
        throw BadMagic("idx file: magic 0x" + [magic] {
            char buf[16];
            std::snprintf(buf, sizeof buf, "%08x", magic);
            return std::string(buf);
        }() + " is not a 3-D u8 tensor (0x00000803)");
    }
    const std::uint64_t n = r.u32_be();
    const std::uint64_t rows = r.u32_be();
    const std::uint64_t cols = r.u32_be();
    const std::uint64_t d = rows * cols;
    if (n == 0 || d == 0) throw EmptyDataset("idx file holds no images");
    if (r.remaining() < n * d) {
        throw TruncatedFile("idx file: payload has " + std::to_string(r.remaining()) + " bytes, header promises " +
                            std::to_string(n * d));
    }
    auto payload = r.take(n * d);
    RowMatrix x(static_cast<Index>(n), static_cast<Index>(d));
    for (std::uint64_t i = 0; i < n * d; ++i) {
        x.data()[i] = payload[i] / 255.0;
    }
    return make_dataset(std::move(x), std::move(tag));
}

inline Dataset load_idx(const std::filesystem::path& path) {
    return parse_idx(io::read_file(path), "idx:" + path.filename().string());
}

inline constexpr std::size_t kCifarRecord = 3073;
inline constexpr std::size_t kCifarPixels = 3072;

/// CIFAR-10 binary batch: 1 label byte + 3072 channel-major pixel bytes per
/// record. Labels are dropped; pixels scale to [0, 1].
inline Dataset parse_cifar_batch(std::span<const std::uint8_t> bytes, std::string tag = "cifar") {
    if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
        throw TruncatedFile("cifar batch: " + std::to_string(bytes.size()) + " bytes is not a positive multiple of " +
                            std::to_string(kCifarRecord));
    }
    const std::size_t n = bytes.size() / kCifarRecord;
    RowMatrix x(static_cast<Index>(n), static_cast<Index>(kCifarPixels));
    for (std::size_t i = 0; i < n; ++i) {
        const auto* rec = bytes.data() + i * kCifarRecord + 1;
        for (std::size_t j = 0; j < kCifarPixels; ++j) {
            x(static_cast<Index>(i), static_cast<Index>(j)) = rec[j] / 255.0;
        }
    }
    return make_dataset(std::move(x), std::move(tag));
}

inline Dataset load_cifar_batch(const std::filesystem::path& path) {
    return parse_cifar_batch(io::read_file(path), "cifar:" + path.filename().string());
}

namespace detail {

inline std::uint8_t to_pixel_byte(double v) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("pixel values must lie in [0, 1]");
    return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

}  // namespace detail

/// Inverse of parse_idx for [0, 1] data; values are rounded to the nearest byte.
inline io::Bytes serialize_idx(const Dataset& ds, std::uint32_t rows, std::uint32_t cols) {
    if (static_cast<Index>(rows) * static_cast<Index>(cols) != ds.dim()) {
        throw ShapeMismatch("idx: " + std::to_string(rows) + "x" + std::to_string(cols) + " does not match dimension " +
                            std::to_string(ds.dim()));
    }
    io::ByteWriter w;
    w.put_u32_be(kIdxU8Tensor3);
    w.put_u32_be(static_cast<std::uint32_t>(ds.size()));
    w.put_u32_be(rows);
    w.put_u32_be(cols);
    for (Index i = 0; i < ds.size(); ++i)
        for (Index j = 0; j < ds.dim(); ++j) w.put_u8(detail::to_pixel_byte(ds.samples(i, j)));
    return w.take();
}

/// Inverse of parse_cifar_batch; labels default to 0.
inline io::Bytes serialize_cifar_batch(const Dataset& ds, std::span<const std::uint8_t> labels = {}) {
    if (ds.dim() != static_cast<Index>(kCifarPixels)) {
        throw ShapeMismatch("cifar batch records hold 3072 values, dataset has " + std::to_string(ds.dim()));
    }
    if (!labels.empty() && labels.size() != static_cast<std::size_t>(ds.size())) {
        throw std::invalid_argument("cifar batch: one label per record");
    }
    io::ByteWriter w;
    for (Index i = 0; i < ds.size(); ++i) {
        w.put_u8(labels.empty() ? 0 : labels[static_cast<std::size_t>(i)]);
        for (Index j = 0; j < ds.dim(); ++j) w.put_u8(detail::to_pixel_byte(ds.samples(i, j)));
    }
    return w.take();
}

// ---------------------------------------------------------------------------
// Transforms

/// Maps entries to `high` when > threshold, else `low`.
inline Dataset binarize(const Dataset& ds, double threshold = 0.5, double low = -1.0, double high = 1.0) {
    if (ds.normalized) throw std::invalid_argument("binarize expects unnormalized data");
    Dataset out = ds;
    out.samples = ds.samples.unaryExpr([=](double v) { return v > threshold ? high : low; });
    out.source_tag = ds.source_tag + "+binary";
    return out;
}

/// `count` square patches at uniform positions of uniformly chosen images. Each
/// sample of `images` is `channels` planes of rows x cols (channel-major).
inline Dataset extract_patches(const Dataset& images, Index rows, Index cols, Index patch, Index count,
                               std::uint64_t seed, Index channels = 1) {
    if (rows < 1 || cols < 1 || channels < 1 || images.dim() != rows * cols * channels) {
        throw ShapeMismatch("images of dimension " + std::to_string(images.dim()) + " are not " +
                            std::to_string(channels) + " x " + std::to_string(rows) + " x " + std::to_string(cols));
    }
    if (patch < 1 || patch > std::min(rows, cols)) {
        throw PatchTooLarge("patch size " + std::to_string(patch) + " does not fit " + std::to_string(rows) + "x" +
                            std::to_string(cols) + " images");
    }
    if (count < 1) throw EmptyDataset("extract_patches needs count >= 1");
    auto rng = make_engine(seed, Stream::patches);
    std::uniform_int_distribution<Index> pick_image(0, images.size() - 1);
    std::uniform_int_distribution<Index> pick_row(0, rows - patch);
    std::uniform_int_distribution<Index> pick_col(0, cols - patch);
    RowMatrix out(count, patch * patch * channels);
    for (Index k = 0; k < count; ++k) {
        const Index img = pick_image(rng);
        const Index r0 = pick_row(rng);
        const Index c0 = pick_col(rng);
        Index o = 0;
        for (Index ch = 0; ch < channels; ++ch)
            for (Index r = 0; r < patch; ++r)
                for (Index c = 0; c < patch; ++c) {
                    out(k, o++) = images.samples(img, ch * rows * cols + (r0 + r) * cols + (c0 + c));
                }
    }
    Dataset ds = make_dataset(std::move(out), images.source_tag + "+patches" + std::to_string(patch));
    return ds;
}

enum class NormMode { per_dim, global };

inline NormMode parse_norm_mode(std::string_view name) {
    if (name == "per_dim") return NormMode::per_dim;
    if (name == "global") return NormMode::global;
    throw std::invalid_argument("unknown norm_mode '" + std::string(name) + "'");
}

inline std::string_view to_string(NormMode m) { return m == NormMode::per_dim ? "per_dim" : "global"; }

/// Standardises with the dataset's own statistics (population std). Constant
/// dimensions are centred but left unscaled.
inline Dataset normalize(const Dataset& ds, NormMode mode = NormMode::per_dim) {
    if (ds.normalized) throw std::invalid_argument("dataset is already normalized");
    const double n = static_cast<double>(ds.size());
    Dataset out = ds;
    if (mode == NormMode::per_dim) {
        out.mean = ds.samples.colwise().mean().transpose();
        const RowMatrix centered = ds.samples.rowwise() - out.mean.transpose();
        out.std = (centered.colwise().squaredNorm() / n).cwiseSqrt().transpose();
    } else {
        const double m = ds.samples.mean();
        const double var = (ds.samples.array() - m).square().sum() / (n * static_cast<double>(ds.dim()));
        out.mean = Vector::Constant(ds.dim(), m);
        out.std = Vector::Constant(ds.dim(), std::sqrt(var));
    }
    for (Index j = 0; j < ds.dim(); ++j) {
        const double scale = out.std[j] < kDegenerateStd ? 1.0 : out.std[j];
        out.samples.col(j) = (ds.samples.col(j).array() - out.mean[j]) / scale;
    }
    out.normalized = true;
    return out;
}

/// Maps raw points into the normalized space of `stats`.
inline RowMatrix apply_normalization(const Dataset& stats, const RowMatrix& raw) {
    if (raw.cols() != stats.dim()) throw DimensionMismatch("points do not match the dataset dimension");
    RowMatrix out(raw.rows(), raw.cols());
    for (Index j = 0; j < raw.cols(); ++j) {
        const double scale = stats.std[j] < kDegenerateStd ? 1.0 : stats.std[j];
        out.col(j) = (raw.col(j).array() - stats.mean[j]) / scale;
    }
    return out;
}

inline Dataset denormalize(const Dataset& ds) {
    if (!ds.normalized) throw std::invalid_argument("dataset is not normalized");
    Dataset out = ds;
    for (Index j = 0; j < ds.dim(); ++j) {
        const double scale = ds.std[j] < kDegenerateStd ? 1.0 : ds.std[j];
        out.samples.col(j) = ds.samples.col(j).array() * scale + ds.mean[j];
    }
    out.mean = Vector::Zero(ds.dim());
    out.std = Vector::Ones(ds.dim());
    out.normalized = false;
    return out;
}

// ---------------------------------------------------------------------------
// Native cache: "SATD0001", u32 n, u32 d, u8 normalized, f64 samples (row-major),
// mean, std. Little-endian.

inline constexpr std::string_view kDatasetMagic = "SATD0001";

inline io::Bytes serialize_dataset(const Dataset& ds) {
    io::ByteWriter w;
    w.put_bytes(kDatasetMagic);
    w.put_u32_le(static_cast<std::uint32_t>(ds.size()));
    w.put_u32_le(static_cast<std::uint32_t>(ds.dim()));
    w.put_u8(ds.normalized ? 1 : 0);
    w.put_f64_array(ds.samples.reshaped<Eigen::RowMajor>());
    w.put_f64_array(ds.mean);
    w.put_f64_array(ds.std);
    return w.take();
}

inline Dataset deserialize_dataset(std::span<const std::uint8_t> bytes, std::string tag = "satd") {
    io::ByteReader r(bytes, "dataset cache");
    r.expect_magic(kDatasetMagic);
    const Index n = r.u32_le();
    const Index d = r.u32_le();
    const std::uint8_t normalized = r.u8();
    if (n < 1 || d < 1) throw EmptyDataset("dataset cache holds no samples");
    if (normalized > 1) throw std::invalid_argument("dataset cache: normalized flag must be 0 or 1");
    RowMatrix x(n, d);
    auto flat = x.reshaped<Eigen::RowMajor>();
    r.f64_array(flat);
    Dataset ds = make_dataset(std::move(x), std::move(tag));
    r.f64_array(ds.mean);
    r.f64_array(ds.std);
    ds.normalized = normalized == 1;
    if (r.remaining() != 0) {
        throw std::invalid_argument("dataset cache: " + std::to_string(r.remaining()) + " trailing bytes");
    }
    return ds;
}

inline void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
    io::write_file(path, serialize_dataset(ds));
}

inline Dataset load_dataset(const std::filesystem::path& path) {
    return deserialize_dataset(io::read_file(path), "satd:" + path.filename().string());
}

}  // namespace satae
