#pragma once

// Single-hidden-layer auto-encoder G(x) = W_d F(W_e x + b_e) + b_d with the
// saturation-penalised loss
//   L(x) = 1/2 ||x - G(x)||^2 + alpha * sum_i f_c((W_e x + b_e)_i).

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "satae/binary_io.hpp"
#include "satae/errors.hpp"
#include "satae/nonlin.hpp"

namespace satae {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VectorRef = Eigen::Ref<const Vector>;

/// Gradient of the loss with the same layout as ModelParams. In tied mode the
/// decoder contribution is folded into enc_weight and dec_weight stays zero.
struct GradRecord {
    Matrix enc_weight;
    Vector enc_bias;
    Matrix dec_weight;
    Vector dec_bias;
};

/// Encoder/decoder parameters. In tied mode dec_weight is kept equal to
/// enc_weight^T by every mutator, so the invariant cannot be broken from outside.
class ModelParams {
public:
    ModelParams() = default;

    ModelParams(Index d, Index d_h, bool tied)
        : enc_weight_(Matrix::Zero(d_h, d)),
          enc_bias_(Vector::Zero(d_h)),
          dec_weight_(Matrix::Zero(d, d_h)),
          dec_bias_(Vector::Zero(d)),
          tied_(tied) {
        if (d < 1 || d_h < 1) {
            throw DimensionMismatch("model dimensions must be positive");
        }
    }

    static ModelParams untied(Matrix enc_weight, Vector enc_bias, Matrix dec_weight, Vector dec_bias) {
        ModelParams p;
        p.enc_weight_ = std::move(enc_weight);
        p.enc_bias_ = std::move(enc_bias);
        p.dec_weight_ = std::move(dec_weight);
        p.dec_bias_ = std::move(dec_bias);
        p.tied_ = false;
        p.check_shapes();
        return p;
    }

    static ModelParams tied(Matrix enc_weight, Vector enc_bias, Vector dec_bias) {
        ModelParams p;
        p.dec_weight_ = enc_weight.transpose();
        p.enc_weight_ = std::move(enc_weight);
        p.enc_bias_ = std::move(enc_bias);
        p.dec_bias_ = std::move(dec_bias);
        p.tied_ = true;
        p.check_shapes();
        return p;
    }

    Index input_dim() const { return enc_weight_.cols(); }
    Index hidden_dim() const { return enc_weight_.rows(); }
    bool is_tied() const { return tied_; }

    const Matrix& enc_weight() const { return enc_weight_; }
    const Vector& enc_bias() const { return enc_bias_; }
    const Matrix& dec_weight() const { return dec_weight_; }
    const Vector& dec_bias() const { return dec_bias_; }

    void set_enc_weight(Matrix w) {
        require_shape(w, hidden_dim(), input_dim(), "enc_weight");
        enc_weight_ = std::move(w);
        if (tied_) dec_weight_ = enc_weight_.transpose();
    }

    void set_dec_weight(Matrix w) {
        require_shape(w, input_dim(), hidden_dim(), "dec_weight");
        if (tied_) {
            // Writing the decoder of a tied model writes the encoder.
            enc_weight_ = w.transpose();
        }
        dec_weight_ = std::move(w);
    }

    void set_enc_bias(Vector b) {
        require_shape(b, hidden_dim(), 1, "enc_bias");
        enc_bias_ = std::move(b);
    }

    void set_dec_bias(Vector b) {
        require_shape(b, input_dim(), 1, "dec_bias");
        dec_bias_ = std::move(b);
    }

    /// p <- p - lr * g
    void apply_gradient(const GradRecord& g, double lr) {
        require_shape(g.enc_weight, hidden_dim(), input_dim(), "grad enc_weight");
        require_shape(g.enc_bias, hidden_dim(), 1, "grad enc_bias");
        require_shape(g.dec_weight, input_dim(), hidden_dim(), "grad dec_weight");
        require_shape(g.dec_bias, input_dim(), 1, "grad dec_bias");
        enc_weight_.noalias() -= lr * g.enc_weight;
        enc_bias_.noalias() -= lr * g.enc_bias;
        dec_bias_.noalias() -= lr * g.dec_bias;
        if (tied_) {
            dec_weight_ = enc_weight_.transpose();
        } else {
            dec_weight_.noalias() -= lr * g.dec_weight;
        }
    }

    friend bool operator==(const ModelParams& a, const ModelParams& b) {
        return a.tied_ == b.tied_ && a.enc_weight_.rows() == b.enc_weight_.rows() &&
               a.enc_weight_.cols() == b.enc_weight_.cols() && a.enc_weight_ == b.enc_weight_ &&
               a.enc_bias_ == b.enc_bias_ && a.dec_weight_ == b.dec_weight_ && a.dec_bias_ == b.dec_bias_;
    }

private:
    template <class M>
    static void require_shape(const M& m, Index rows, Index cols, const char* what) {
        if (m.rows() != rows || m.cols() != cols) {
            throw DimensionMismatch(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                                    std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" +
                                    std::to_string(m.cols()));
        }
    }

    void check_shapes() const {
        const Index d_h = enc_weight_.rows();
        const Index d = enc_weight_.cols();
        if (d < 1 || d_h < 1) throw DimensionMismatch("model dimensions must be positive");
        require_shape(enc_bias_, d_h, 1, "enc_bias");
        require_shape(dec_weight_, d, d_h, "dec_weight");
        require_shape(dec_bias_, d, 1, "dec_bias");
    }

    Matrix enc_weight_;
    Vector enc_bias_;
    Matrix dec_weight_;
    Vector dec_bias_;
    bool tied_ = false;
};

/// Terms of the loss; total = reconstruction + alpha * saturation.
struct LossBreakdown {
    double reconstruction = 0.0;
    double saturation = 0.0;
    double alpha = 0.0;
    double total = 0.0;
};

inline void check_input(const ModelParams& p, const VectorRef& x) {
    if (x.size() != p.input_dim()) {
        throw DimensionMismatch("input has dimension " + std::to_string(x.size()) + ", model expects " +
                                std::to_string(p.input_dim()));
    }
}

/// z = W_e x + b_e
inline Vector pre_activation(const ModelParams& p, const VectorRef& x) {
    check_input(p, x);
    return p.enc_weight() * x + p.enc_bias();
}

inline Vector apply(const Nonlinearity& f, const Vector& z) {
    return z.unaryExpr([&f](double v) { return f.eval(v); });
}

inline Vector encode(const ModelParams& p, const Nonlinearity& f, const VectorRef& x) {
    return apply(f, pre_activation(p, x));
}

inline Vector decode(const ModelParams& p, const VectorRef& h) {
    if (h.size() != p.hidden_dim()) {
        throw DimensionMismatch("code has dimension " + std::to_string(h.size()) + ", model expects " +
                                std::to_string(p.hidden_dim()));
    }
    return p.dec_weight() * h + p.dec_bias();
}

inline Vector reconstruct(const ModelParams& p, const Nonlinearity& f, const VectorRef& x) {
    return decode(p, encode(p, f, x));
}

/// 1/2 ||x - G(x)||^2
inline double recon_energy(const ModelParams& p, const Nonlinearity& f, const VectorRef& x) {
    return 0.5 * (x - reconstruct(p, f, x)).squaredNorm();
}

inline double sat_penalty_from_pre(const Nonlinearity& f, const Vector& z) {
    if (!f.has_saturation()) {
        throw EmptySaturationSet("saturation penalty undefined for the linear activation");
    }
    double s = 0.0;
    for (Index i = 0; i < z.size(); ++i) s += f.comp(z[i]);
    return s;
}

/// Unweighted sum of f_c over the hidden pre-activations.
inline double sat_penalty(const ModelParams& p, const Nonlinearity& f, const VectorRef& x) {
    return sat_penalty_from_pre(f, pre_activation(p, x));
}

inline void check_alpha(const Nonlinearity& f, double alpha) {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
        throw std::invalid_argument("alpha must be finite and non-negative");
    }
    if (alpha > 0.0 && !f.has_saturation()) {
        throw EmptySaturationSet("alpha > 0 needs an activation with a saturation region");
    }
}

/// Single-sample loss terms.
inline LossBreakdown sample_loss(const ModelParams& p, const Nonlinearity& f, double alpha, const VectorRef& x) {
    check_alpha(f, alpha);
    const Vector z = pre_activation(p, x);
    LossBreakdown out;
    out.alpha = alpha;
    out.reconstruction = 0.5 * (x - decode(p, apply(f, z))).squaredNorm();
    out.saturation = alpha > 0.0 ? sat_penalty_from_pre(f, z) : 0.0;
    out.total = out.reconstruction + alpha * out.saturation;
    return out;
}

/// Loss summed over the rows of `batch`.
template <class Derived>
LossBreakdown loss(const ModelParams& p, const Nonlinearity& f, double alpha, const Eigen::MatrixBase<Derived>& batch) {
    check_alpha(f, alpha);
    if (batch.cols() != p.input_dim()) {
        throw DimensionMismatch("batch has " + std::to_string(batch.cols()) + " columns, model expects " +
                                std::to_string(p.input_dim()));
    }
    LossBreakdown out;
    out.alpha = alpha;
    for (Index r = 0; r < batch.rows(); ++r) {
        const Vector x = batch.row(r).transpose();
        const auto s = sample_loss(p, f, alpha, x);
        out.reconstruction += s.reconstruction;
        out.saturation += s.saturation;
    }
    out.total = out.reconstruction + alpha * out.saturation;
    return out;
}

/// Analytic (sub)gradient of the single-sample loss.
inline GradRecord loss_grad(const ModelParams& p, const Nonlinearity& f, double alpha, const VectorRef& x) {
    check_alpha(f, alpha);
    const Vector z = pre_activation(p, x);
    const Vector h = apply(f, z);
    const Vector r = decode(p, h) - x;

    Vector delta = (p.dec_weight().transpose() * r).cwiseProduct(z.unaryExpr([&f](double v) { return f.deriv(v); }));
    if (alpha > 0.0) {
        delta += alpha * z.unaryExpr([&f](double v) { return f.comp_deriv(v); });
    }

    GradRecord g;
    g.enc_weight = delta * x.transpose();
    g.enc_bias = delta;
    g.dec_bias = r;
    if (p.is_tied()) {
        g.enc_weight.noalias() += h * r.transpose();
        g.dec_weight = Matrix::Zero(p.input_dim(), p.hidden_dim());
    } else {
        g.dec_weight = r * h.transpose();
    }
    return g;
}

/// Contractive penalty sum_i f'(z_i)^2 ||row i of W_e||^2, the squared Frobenius
/// norm of dh/dx.
inline double cae_penalty(const ModelParams& p, const Nonlinearity& f, const VectorRef& x) {
    const Vector fp = pre_activation(p, x).unaryExpr([&f](double v) { return f.deriv(v); });
    const Matrix scaled = fp.asDiagonal() * p.enc_weight();
    return scaled.squaredNorm();
}

// ---------------------------------------------------------------------------
// Model file: "SATAE001", u32 d, u32 d_h, u8 tied, u8 kind, f64 lambda, then
// row-major f64 enc_weight, enc_bias, dec_weight, dec_bias. Little-endian.

inline constexpr std::string_view kModelMagic = "SATAE001";

struct SavedModel {
    ModelParams params;
    Nonlinearity activation = Nonlinearity::linear();
};

inline io::Bytes serialize_model(const ModelParams& p, const Nonlinearity& f) {
    if (f.kind() == NonlinKind::tabulated) {
        throw std::invalid_argument("tabulated activations cannot be stored in a model file");
    }
    io::ByteWriter w;
    w.put_bytes(kModelMagic);
    w.put_u32_le(static_cast<std::uint32_t>(p.input_dim()));
    w.put_u32_le(static_cast<std::uint32_t>(p.hidden_dim()));
    w.put_u8(p.is_tied() ? 1 : 0);
    w.put_u8(static_cast<std::uint8_t>(f.kind()));
    w.put_f64_le(f.width());
    const auto put_matrix = [&w](const Matrix& m) {
        for (Index r = 0; r < m.rows(); ++r)
            for (Index c = 0; c < m.cols(); ++c) w.put_f64_le(m(r, c));
    };
    put_matrix(p.enc_weight());
    w.put_f64_array(p.enc_bias());
    put_matrix(p.dec_weight());
    w.put_f64_array(p.dec_bias());
    return w.take();
}

inline SavedModel deserialize_model(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes, "model file");
    r.expect_magic(kModelMagic);
    const Index d = r.u32_le();
    const Index d_h = r.u32_le();
    const std::uint8_t tied = r.u8();
    const std::uint8_t kind = r.u8();
    const double lambda = r.f64_le();
    if (d < 1 || d_h < 1) throw DimensionMismatch("model file declares an empty dimension");
    if (tied > 1) throw std::invalid_argument("model file: tied flag must be 0 or 1");
    if (kind >= static_cast<std::uint8_t>(NonlinKind::tabulated)) {
        throw std::invalid_argument("model file: unknown activation code " + std::to_string(kind));
    }
    const auto get_matrix = [&r](Index rows, Index cols) {
        Matrix m(rows, cols);
        for (Index i = 0; i < rows; ++i)
            for (Index j = 0; j < cols; ++j) m(i, j) = r.f64_le();
        return m;
    };
    Matrix enc_w = get_matrix(d_h, d);
    Vector enc_b(d_h);
    r.f64_array(enc_b);
    Matrix dec_w = get_matrix(d, d_h);
    Vector dec_b(d);
    r.f64_array(dec_b);
    if (r.remaining() != 0) {
        throw std::invalid_argument("model file: " + std::to_string(r.remaining()) + " trailing bytes");
    }
    SavedModel out;
    out.activation = Nonlinearity::from_kind(static_cast<NonlinKind>(kind), lambda);
    if (tied) {
        if (dec_w != enc_w.transpose()) {
            throw std::invalid_argument("model file: tied model whose decoder is not the encoder transpose");
        }
        out.params = ModelParams::tied(std::move(enc_w), std::move(enc_b), std::move(dec_b));
    } else {
        out.params = ModelParams::untied(std::move(enc_w), std::move(enc_b), std::move(dec_w), std::move(dec_b));
    }
    return out;
}

inline void save_model(const std::filesystem::path& path, const ModelParams& p, const Nonlinearity& f) {
    io::write_file(path, serialize_model(p, f));
}

inline SavedModel load_model(const std::filesystem::path& path) {
    return deserialize_model(io::read_file(path));
}

}  // namespace satae
