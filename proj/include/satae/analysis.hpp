#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "satae/binary_io.hpp"
#include "satae/data.hpp"
#include "satae/errors.hpp"
#include "satae/model.hpp"
#include "satae/nonlin.hpp"
#include "satae/text.hpp"

namespace satae {

// ---------------------------------------------------------------------------
// Reconstruction-energy grids over a 2-D input box

struct GridBounds {
    double x_min = -1.0;
    double x_max = 1.0;
    double y_min = -1.0;
    double y_max = 1.0;
};

/// values(j, i) is the energy at the centre of cell (column i, row j); rows run
/// along y (outer), columns along x (inner).
struct EnergyGrid {
    GridBounds bounds;
    int resolution = 0;
    RowMatrix values;

    double node_x(int i) const { return bounds.x_min + (i + 0.5) * (bounds.x_max - bounds.x_min) / resolution; }
    double node_y(int j) const { return bounds.y_min + (j + 0.5) * (bounds.y_max - bounds.y_min) / resolution; }
};

/// Worker count for grid evaluation: hardware concurrency, capped by SATAE_THREADS.
inline unsigned grid_threads() {
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("SATAE_THREADS")) {
        const long cap = std::strtol(env, nullptr, 10);
        if (cap >= 1) n = std::min(n, static_cast<unsigned>(cap));
    }
    return n;
}

inline EnergyGrid energy_grid(const ModelParams& p, const Nonlinearity& f, const GridBounds& bounds, int resolution,
                              unsigned threads = 0) {
    if (p.input_dim() != 2) {
        throw NotTwoDimensional("energy grids need a 2-D model, got d = " + std::to_string(p.input_dim()));
    }
    if (resolution < 2) throw std::invalid_argument("resolution must be >= 2");
    if (!(bounds.x_min < bounds.x_max) || !(bounds.y_min < bounds.y_max)) {
        throw std::invalid_argument("grid bounds must satisfy min < max");
    }
    EnergyGrid g;
    g.bounds = bounds;
    g.resolution = resolution;
    g.values.resize(resolution, resolution);

    // Rows are independent, so any split gives identical values.
    const auto fill_rows = [&](int first, int last) {
        Vector x(2);
        for (int j = first; j < last; ++j) {
            for (int i = 0; i < resolution; ++i) {
                x << g.node_x(i), g.node_y(j);
                g.values(j, i) = recon_energy(p, f, x);
            }
        }
    };
    const unsigned workers = std::min<unsigned>(threads == 0 ? grid_threads() : threads, resolution);
    if (workers <= 1) {
        fill_rows(0, resolution);
        return g;
    }
    std::vector<std::jthread> pool;
    const int chunk = (resolution + static_cast<int>(workers) - 1) / static_cast<int>(workers);
    for (int first = 0; first < resolution; first += chunk) {
        pool.emplace_back(fill_rows, first, std::min(resolution, first + chunk));
    }
    pool.clear();
    return g;
}

/// `x,y,energy` rows in grid order (y outer, x inner).
inline std::string energy_grid_csv(const EnergyGrid& g) {
    std::string out = "x,y,energy\n";
    for (int j = 0; j < g.resolution; ++j) {
        for (int i = 0; i < g.resolution; ++i) {
            out += format_double(g.node_x(i)) + ',' + format_double(g.node_y(j)) + ',' +
                   format_double(g.values(j, i)) + '\n';
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Netpbm images

struct PnmImage {
    int width = 0;
    int height = 0;
    int channels = 1;  // 1: P5 grayscale, 3: P6 RGB
    std::vector<std::uint8_t> pixels;  // row-major, interleaved channels

    friend bool operator==(const PnmImage&, const PnmImage&) = default;
};

inline io::Bytes encode_pnm(const PnmImage& img) {
    if (img.channels != 1 && img.channels != 3) throw std::invalid_argument("pnm images have 1 or 3 channels");
    if (img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * img.channels) {
        throw ShapeMismatch("pixel buffer does not match the image size");
    }
    io::ByteWriter w;
    w.put_bytes(img.channels == 1 ? "P5\n" : "P6\n");
    w.put_bytes(std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n");
    io::Bytes out = w.take();
    out.insert(out.end(), img.pixels.begin(), img.pixels.end());
    return out;
}

/// Reads binary P5/P6 with maxval 255 (comments allowed in the header).
inline PnmImage decode_pnm(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    const auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    const auto read_int = [&] {
        skip_space();
        if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw TruncatedFile("pnm: malformed header");
        long v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
        return static_cast<int>(v);
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
        throw BadMagic("pnm: expected P5 or P6");
    }
    PnmImage img;
    img.channels = bytes[1] == '5' ? 1 : 3;
    pos = 2;
    img.width = read_int();
    img.height = read_int();
    if (read_int() != 255) throw std::invalid_argument("pnm: only maxval 255 is supported");
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw TruncatedFile("pnm: malformed header");
    ++pos;
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height * img.channels;
    if (bytes.size() - pos < n) throw TruncatedFile("pnm: pixel data is truncated");
    img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                      bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
    return img;
}

inline void save_pnm(const std::filesystem::path& path, const PnmImage& img) { io::write_file(path, encode_pnm(img)); }
inline PnmImage load_pnm(const std::filesystem::path& path) { return decode_pnm(io::read_file(path)); }

/// Grayscale rendering of an energy grid: lowest energy black, highest white,
/// linear in E (or in log(1 + E - min) with log_scale). Top image row is y_max.
inline PnmImage energy_grid_image(const EnergyGrid& g, bool log_scale = false) {
    const double lo = g.values.minCoeff();
    RowMatrix v = g.values.array() - lo;
    if (log_scale) v = v.array().log1p();
    const double hi = v.maxCoeff();
    PnmImage img;
    img.width = g.resolution;
    img.height = g.resolution;
    img.pixels.resize(static_cast<std::size_t>(g.resolution) * g.resolution);
    for (int j = 0; j < g.resolution; ++j) {
        const int row = g.resolution - 1 - j;
        for (int i = 0; i < g.resolution; ++i) {
            const double t = hi > 0.0 ? v(j, i) / hi : 0.0;
            img.pixels[static_cast<std::size_t>(row) * g.resolution + i] =
                static_cast<std::uint8_t>(std::lround(255.0 * t));
        }
    }
    return img;
}

// ---------------------------------------------------------------------------
// Scalar diagnostics

inline double median(std::vector<double> v) {
    if (v.empty()) throw EmptyDataset("median of an empty set");
    const auto mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double upper = v[mid];
    if (v.size() % 2 == 1) return upper;
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

template <class Derived>
std::vector<double> energies(const ModelParams& p, const Nonlinearity& f, const Eigen::MatrixBase<Derived>& points) {
    if (points.cols() != p.input_dim()) throw DimensionMismatch("points do not match the model dimension");
    std::vector<double> e(static_cast<std::size_t>(points.rows()));
    for (Index r = 0; r < points.rows(); ++r) {
        e[static_cast<std::size_t>(r)] = recon_energy(p, f, points.row(r).transpose());
    }
    return e;
}

/// median energy off the data / (median energy on the data + 1e-12)
template <class OnPoints, class OffPoints>
double contrast_ratio(const ModelParams& p, const Nonlinearity& f, const Eigen::MatrixBase<OnPoints>& on_points,
                      const Eigen::MatrixBase<OffPoints>& off_points) {
    if (on_points.rows() < 1 || off_points.rows() < 1) throw EmptyDataset("contrast_ratio needs both point sets");
    return median(energies(p, f, off_points)) / (median(energies(p, f, on_points)) + 1e-12);
}

inline double contrast_ratio(const ModelParams& p, const Nonlinearity& f, const Dataset& on, const Dataset& off) {
    return contrast_ratio(p, f, on.samples, off.samples);
}

/// Fraction of (sample, unit) pre-activations inside the saturation set.
template <class Derived>
double saturation_fraction(const ModelParams& p, const Nonlinearity& f, const Eigen::MatrixBase<Derived>& data) {
    const auto sat = f.saturation_set();
    if (sat.empty()) throw EmptySaturationSet("saturation fraction undefined without a saturation region");
    if (data.cols() != p.input_dim()) throw DimensionMismatch("data does not match the model dimension");
    if (data.rows() < 1) throw EmptyDataset("saturation_fraction needs data");
    std::uint64_t hits = 0;
    for (Index r = 0; r < data.rows(); ++r) {
        const Vector z = pre_activation(p, data.row(r).transpose());
        for (Index i = 0; i < z.size(); ++i) hits += sat.contains(z[i]) ? 1 : 0;
    }
    return static_cast<double>(hits) / (static_cast<double>(data.rows()) * static_cast<double>(p.hidden_dim()));
}

inline double saturation_fraction(const ModelParams& p, const Nonlinearity& f, const Dataset& data) {
    return saturation_fraction(p, f, data.samples);
}

// ---------------------------------------------------------------------------
// Filter tilings

struct FilterTiling {
    int grid_rows = 0;
    int grid_cols = 0;
    int tile_rows = 0;
    int tile_cols = 0;
    int channels = 1;
    PnmImage image;
};

/// Lays decoder columns out as tiles, each min-max scaled to [0, 255]
/// independently (constant tiles render 128). Tiles sit on a near-square grid
/// separated by 1-pixel black lines. Colour tiles read channel-major columns.
inline FilterTiling tile_filters(const ModelParams& p, int tile_rows, int tile_cols, int channels = 1) {
    if (tile_rows < 1 || tile_cols < 1 || (channels != 1 && channels != 3)) {
        throw ShapeMismatch("tiles need positive size and 1 or 3 channels");
    }
    const Index pixels = static_cast<Index>(tile_rows) * tile_cols;
    if (p.input_dim() != pixels * channels) {
        throw ShapeMismatch("model input dimension " + std::to_string(p.input_dim()) + " is not " +
                            std::to_string(tile_rows) + "x" + std::to_string(tile_cols) + "x" +
                            std::to_string(channels));
    }
    const int units = static_cast<int>(p.hidden_dim());
    FilterTiling t;
    t.tile_rows = tile_rows;
    t.tile_cols = tile_cols;
    t.channels = channels;
    t.grid_cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(units))));
    t.grid_rows = (units + t.grid_cols - 1) / t.grid_cols;
    auto& img = t.image;
    img.channels = channels;
    img.width = t.grid_cols * tile_cols + (t.grid_cols - 1);
    img.height = t.grid_rows * tile_rows + (t.grid_rows - 1);
    img.pixels.assign(static_cast<std::size_t>(img.width) * img.height * channels, 0);

    const Matrix& w = p.dec_weight();
    for (int u = 0; u < units; ++u) {
        const auto col = w.col(u);
        const double lo = col.minCoeff();
        const double hi = col.maxCoeff();
        const int top = (u / t.grid_cols) * (tile_rows + 1);
        const int left = (u % t.grid_cols) * (tile_cols + 1);
        for (int r = 0; r < tile_rows; ++r) {
            for (int c = 0; c < tile_cols; ++c) {
                for (int ch = 0; ch < channels; ++ch) {
                    const double v = col[ch * pixels + r * tile_cols + c];
                    const auto byte = hi > lo ? static_cast<std::uint8_t>(std::lround(255.0 * (v - lo) / (hi - lo)))
                                              : std::uint8_t{128};
                    const auto at = (static_cast<std::size_t>(top + r) * img.width + (left + c)) * channels + ch;
                    img.pixels[at] = byte;
                }
            }
        }
    }
    return t;
}

// ---------------------------------------------------------------------------
// PCA oracle

/// Orthogonal projector onto the top-k eigenvectors of the sample covariance.
template <class Derived>
Matrix pca_projector(const Eigen::MatrixBase<Derived>& data, Index k) {
    const Index d = data.cols();
    if (k < 1 || k > d) throw std::invalid_argument("pca_projector needs 1 <= k <= d");
    if (data.rows() < 2) throw EmptyDataset("pca_projector needs at least two samples");
    const Eigen::RowVectorXd mean = data.colwise().mean();
    const Matrix centered = data.rowwise() - mean;
    const Matrix cov = centered.transpose() * centered / static_cast<double>(data.rows() - 1);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    // Eigenvalues come back ascending.
    const Matrix top = eig.eigenvectors().rightCols(k);
    return top * top.transpose();
}

inline Matrix pca_projector(const Dataset& data, Index k) { return pca_projector(data.samples, k); }

/// Largest principal angle (radians) between the column spans of a and b.
inline double max_principal_angle(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw DimensionMismatch("subspaces live in different dimensions");
    const Matrix qa = Eigen::HouseholderQR<Matrix>(a).householderQ() * Matrix::Identity(a.rows(), a.cols());
    const Matrix qb = Eigen::HouseholderQR<Matrix>(b).householderQ() * Matrix::Identity(b.rows(), b.cols());
    // sin of the largest angle is the norm of the part of qa outside span(qb).
    const Matrix residual = qa - qb * (qb.transpose() * qa);
    const double s = Eigen::JacobiSVD<Matrix>(residual).singularValues()(0);
    return std::asin(std::min(1.0, s));
}

}  // namespace satae
