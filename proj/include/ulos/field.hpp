#pragma once

// Trainable unified field: sinusoidal positional encoding, an SDF MLP whose
// spatial gradient is propagated analytically alongside the value, a
// reflectivity MLP, the scalar power parameter and the sigmoid sharpness s.
//
// Differentiation is hand-rolled reverse mode. The forward pass carries the
// value plus three tangent channels (d/dx, d/dy, d/dz); the backward pass
// runs reverse over that extended computation so losses may depend on both
// the field value and its spatial gradient. Finite differences arbitrate
// correctness in the test suite.

#include "ulos/common.hpp"
#include "ulos/optim.hpp"

#include <functional>

namespace ulos {

inline constexpr double kSoftplusBeta = 100.0;  // SDF activation sharpness

// ---------------------------------------------------------------------------

struct DomainMap {
    Vec3 center{0, 0, 0};
    double scale = 1.0;  // x_norm = (x - center) / scale

    static DomainMap from_box(const Aabb& box) {
        return {box.center(), box.max_half_extent()};
    }
};

struct Mlp {
    std::vector<Eigen::MatrixXd> W;  // W[l]: (out x in)
    std::vector<Eigen::VectorXd> b;

    int n_layers() const { return static_cast<int>(W.size()); }

    std::vector<int> dims() const {
        std::vector<int> d;
        if (W.empty()) return d;
        d.push_back(static_cast<int>(W.front().cols()));
        for (const auto& w : W) d.push_back(static_cast<int>(w.rows()));
        return d;
    }

    static Mlp zeros(const std::vector<int>& dims) {
        Mlp m;
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
            m.W.emplace_back(Eigen::MatrixXd::Zero(dims[l + 1], dims[l]));
            m.b.emplace_back(Eigen::VectorXd::Zero(dims[l + 1]));
        }
        return m;
    }

    Eigen::Index param_count() const {
        Eigen::Index n = 0;
        for (int l = 0; l < n_layers(); ++l) n += W[l].size() + b[l].size();
        return n;
    }

    bool finite() const {
        for (int l = 0; l < n_layers(); ++l)
            if (!W[l].allFinite() || !b[l].allFinite()) return false;
        return true;
    }
};

struct FieldParams {
    int pe_levels = 6;
    DomainMap domain;
    Mlp sdf;
    Mlp refl;
    double log_s = 0.0;        // s = exp(log_s), sigmoid sharpness
    double power_scalar = 0.0; // A_tx = exp(power_scalar)
    bool refl_frozen = true;

    double s() const { return std::exp(log_s); }
    double power() const { return std::exp(power_scalar); }

    int pe_dim() const { return 3 + 6 * pe_levels; }

    void validate() const {
        if (!(s() > 0.0) || !std::isfinite(log_s) || !std::isfinite(power_scalar) ||
            !sdf.finite() || !refl.finite())
            throw NonFiniteParams("field parameters are not finite");
    }

    // Flattening order: sdf (W then b per layer), refl, power_scalar, log_s.
    Eigen::Index param_count() const { return sdf.param_count() + refl.param_count() + 2; }
    Eigen::Index sdf_param_count() const { return sdf.param_count(); }

    Eigen::VectorXd to_flat() const {
        Eigen::VectorXd v(param_count());
        Eigen::Index off = 0;
        auto put = [&](const Mlp& m) {
            for (int l = 0; l < m.n_layers(); ++l) {
                Eigen::Map<const Eigen::VectorXd> w(m.W[l].data(), m.W[l].size());
                v.segment(off, w.size()) = w;
                off += w.size();
                v.segment(off, m.b[l].size()) = m.b[l];
                off += m.b[l].size();
            }
        };
        put(sdf);
        put(refl);
        v[off++] = power_scalar;
        v[off++] = log_s;
        return v;
    }

    void from_flat(const Eigen::VectorXd& v) {
        Eigen::Index off = 0;
        auto take = [&](Mlp& m) {
            for (int l = 0; l < m.n_layers(); ++l) {
                Eigen::Map<Eigen::VectorXd> w(m.W[l].data(), m.W[l].size());
                w = v.segment(off, w.size());
                off += w.size();
                m.b[l] = v.segment(off, m.b[l].size());
                off += m.b[l].size();
            }
        };
        take(sdf);
        take(refl);
        power_scalar = v[off++];
        log_s = v[off++];
    }
};

// Gradient accumulator, same shapes as the parameters.
struct FieldGrads {
    Mlp sdf, refl;
    double power_scalar = 0.0;
    double log_s = 0.0;

    static FieldGrads zeros_like(const FieldParams& p) {
        FieldGrads g;
        g.sdf = Mlp::zeros(p.sdf.dims());
        g.refl = Mlp::zeros(p.refl.dims());
        return g;
    }

    void add(const FieldGrads& o) {
        for (int l = 0; l < sdf.n_layers(); ++l) {
            sdf.W[l] += o.sdf.W[l];
            sdf.b[l] += o.sdf.b[l];
        }
        for (int l = 0; l < refl.n_layers(); ++l) {
            refl.W[l] += o.refl.W[l];
            refl.b[l] += o.refl.b[l];
        }
        power_scalar += o.power_scalar;
        log_s += o.log_s;
    }

    Eigen::VectorXd to_flat() const {
        Eigen::VectorXd v(sdf.param_count() + refl.param_count() + 2);
        Eigen::Index off = 0;
        auto put = [&](const Mlp& m) {
            for (int l = 0; l < m.n_layers(); ++l) {
                Eigen::Map<const Eigen::VectorXd> w(m.W[l].data(), m.W[l].size());
                v.segment(off, w.size()) = w;
                off += w.size();
                v.segment(off, m.b[l].size()) = m.b[l];
                off += m.b[l].size();
            }
        };
        put(sdf);
        put(refl);
        v[off++] = power_scalar;
        v[off++] = log_s;
        return v;
    }
};

// ---------------------------------------------------------------------------
// Sigmoid transition Phi_s and softplus activation helpers.

inline double phi_s(double s, double f) { return 1.0 / (1.0 + std::exp(-s * f)); }
inline double phi_s(const FieldParams& p, double f) { return phi_s(p.s(), f); }

namespace detail {

inline double softplus(double z, double beta) {
    const double bz = beta * z;
    if (bz > 30.0) return z;
    return std::log1p(std::exp(bz)) / beta;
}
inline double softplus_d(double z, double beta) {  // sigmoid(beta z)
    const double bz = beta * z;
    if (bz > 30.0) return 1.0;
    if (bz < -30.0) return std::exp(bz);
    return 1.0 / (1.0 + std::exp(-bz));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Positional encoding. Layout: [x y z | sin(2^0 pi x) sin(2^0 pi y)
// sin(2^0 pi z) cos(2^0 pi x) .. | sin(2^1 pi x) .. ] on normalized coords.

inline void positional_encode(const Vec3& x_norm, int levels, Eigen::Ref<Eigen::VectorXd> out) {
    out.segment<3>(0) = x_norm;
    int row = 3;
    for (int l = 0; l < levels; ++l) {
        const double f = std::ldexp(kPi, l);  // 2^l * pi
        for (int a = 0; a < 3; ++a) out[row + a] = std::sin(f * x_norm[a]);
        for (int a = 0; a < 3; ++a) out[row + 3 + a] = std::cos(f * x_norm[a]);
        row += 6;
    }
}

inline Eigen::VectorXd positional_encode(const Vec3& x_norm, int levels) {
    Eigen::VectorXd out(3 + 6 * levels);
    positional_encode(x_norm, levels, out);
    return out;
}

namespace detail {

// Encoded features plus tangents w.r.t. the *meter-space* coordinates for a
// batch of points. E is (pe_dim x 4N): value block then d/dx, d/dy, d/dz.
inline void encode_with_tangents(const FieldParams& p, const Eigen::Matrix3Xd& pts,
                                 Eigen::MatrixXd& E, bool tangents) {
    const Eigen::Index n = pts.cols();
    const int dim = p.pe_dim();
    const double inv_scale = 1.0 / p.domain.scale;
    E.setZero(dim, tangents ? 4 * n : n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vec3 xn = (pts.col(i) - p.domain.center) * inv_scale;
        E.col(i).segment<3>(0) = xn;
        int row = 3;
        for (int l = 0; l < p.pe_levels; ++l) {
            const double f = std::ldexp(kPi, l);
            for (int a = 0; a < 3; ++a) {
                const double sa = std::sin(f * xn[a]);
                const double ca = std::cos(f * xn[a]);
                E(row + a, i) = sa;
                E(row + 3 + a, i) = ca;
                if (tangents) {
                    // d/dx_meters = d/dx_norm * inv_scale, nonzero only for axis a
                    E(row + a, (a + 1) * n + i) = f * ca * inv_scale;
                    E(row + 3 + a, (a + 1) * n + i) = -f * sa * inv_scale;
                }
            }
            row += 6;
        }
        if (tangents)
            for (int a = 0; a < 3; ++a) E(a, (a + 1) * n + i) = inv_scale;
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Forward evaluation

struct FieldEvalOut {
    Eigen::VectorXd g;      // signed distance value, meters
    Eigen::Matrix3Xd grad;  // d g / d x, per point
    Eigen::VectorXd a;      // reflectivity (>= 0; exactly 1 when frozen)
};

namespace detail {

// One chunk, single thread. If `tape` is non-null the per-layer states are
// recorded for the backward pass.
struct MlpTape {
    Eigen::MatrixXd E;                    // input features (dim x 4N)
    std::vector<Eigen::MatrixXd> Z;       // pre-activations (out x 4N)
    std::vector<Eigen::MatrixXd> H;       // layer inputs l>=1 (out x 4N)
};

inline void sdf_forward_chunk(const FieldParams& p, const Eigen::Matrix3Xd& pts, bool need_grad,
                              Eigen::VectorXd& g, Eigen::Matrix3Xd& grad, MlpTape* tape) {
    const Eigen::Index n = pts.cols();
    const Eigen::Index blocks = need_grad ? 4 : 1;
    Eigen::MatrixXd E;
    detail::encode_with_tangents(p, pts, E, need_grad);

    const int L = p.sdf.n_layers();
    Eigen::MatrixXd cur = E;
    if (tape) tape->E = E;
    for (int l = 0; l < L; ++l) {
        Eigen::MatrixXd z = p.sdf.W[l] * cur;
        z.leftCols(n).colwise() += p.sdf.b[l];
        if (l + 1 < L) {
            Eigen::MatrixXd h(z.rows(), z.cols());
            for (Eigen::Index c = 0; c < n; ++c)
                for (Eigen::Index r = 0; r < z.rows(); ++r)
                    h(r, c) = detail::softplus(z(r, c), kSoftplusBeta);
            for (Eigen::Index blk = 1; blk < blocks; ++blk)
                for (Eigen::Index c = 0; c < n; ++c)
                    for (Eigen::Index r = 0; r < z.rows(); ++r)
                        h(r, blk * n + c) = detail::softplus_d(z(r, c), kSoftplusBeta) * z(r, blk * n + c);
            if (tape) {
                tape->Z.push_back(std::move(z));
                tape->H.push_back(h);
            }
            cur = std::move(h);
        } else {
            g = z.row(0).segment(0, n).transpose();
            if (need_grad) {
                grad.resize(3, n);
                for (int k = 0; k < 3; ++k) grad.row(k) = z.row(0).segment((k + 1) * n, n);
            }
            if (tape) tape->Z.push_back(std::move(z));
        }
    }
}

inline void refl_forward_chunk(const FieldParams& p, const Eigen::Matrix3Xd& pts,
                               Eigen::VectorXd& a, MlpTape* tape) {
    const Eigen::Index n = pts.cols();
    if (p.refl_frozen || p.refl.n_layers() == 0) {
        a = Eigen::VectorXd::Ones(n);
        return;
    }
    Eigen::MatrixXd E;
    detail::encode_with_tangents(p, pts, E, false);
    const int L = p.refl.n_layers();
    Eigen::MatrixXd cur = E;
    if (tape) tape->E = E;
    for (int l = 0; l < L; ++l) {
        Eigen::MatrixXd z = (p.refl.W[l] * cur).colwise() + p.refl.b[l];
        if (l + 1 < L) {
            Eigen::MatrixXd h = z.unaryExpr([](double v) { return detail::softplus(v, kSoftplusBeta); });
            if (tape) {
                tape->Z.push_back(std::move(z));
                tape->H.push_back(h);
            }
            cur = std::move(h);
        } else {
            // softplus output map keeps reflectivity non-negative
            a = z.row(0).transpose().unaryExpr([](double v) { return detail::softplus(v, 1.0); });
            if (tape) tape->Z.push_back(std::move(z));
        }
    }
}

}  // namespace detail

inline void eval_field(const FieldParams& p, const Eigen::Matrix3Xd& pts, FieldEvalOut& out,
                       bool need_grad = true, bool need_refl = true) {
    const Eigen::Index n = pts.cols();
    out.g.resize(n);
    if (need_grad) out.grad.resize(3, n);
    if (need_refl) out.a.resize(n);

    const Eigen::Index chunk = 1024;
    const Eigen::Index n_blocks = (n + chunk - 1) / chunk;
    parallel_for(n_blocks, [&](std::int64_t b0, std::int64_t b1, int) {
        for (std::int64_t b = b0; b < b1; ++b) {
            const Eigen::Index i0 = b * chunk;
            const Eigen::Index len = std::min(chunk, n - i0);
            const Eigen::Matrix3Xd sub = pts.middleCols(i0, len);
            Eigen::VectorXd g;
            Eigen::Matrix3Xd grad;
            detail::sdf_forward_chunk(p, sub, need_grad, g, grad, nullptr);
            out.g.segment(i0, len) = g;
            if (need_grad) out.grad.middleCols(i0, len) = grad;
            if (need_refl) {
                Eigen::VectorXd a;
                detail::refl_forward_chunk(p, sub, a, nullptr);
                out.a.segment(i0, len) = a;
            }
        }
    });
    if (!out.g.allFinite()) throw NonFiniteField("field evaluation produced non-finite values");
}

// Single-point convenience (slow path for tests and tools).
inline double eval_sdf(const FieldParams& p, const Vec3& x) {
    Eigen::Matrix3Xd pts(3, 1);
    pts.col(0) = x;
    FieldEvalOut out;
    eval_field(p, pts, out, false, false);
    return out.g[0];
}

// ---------------------------------------------------------------------------
// Backward: accumulate parameter gradients for a batch of points given
// adjoints of g, grad g, and a. dpower / ds are adjoints of the *values*
// A_tx = exp(power_scalar) and s = exp(log_s); the exp chain is applied here.

struct FieldAdjoints {
    Eigen::VectorXd dg;       // size N or 0
    Eigen::Matrix3Xd dgrad;   // 3 x N or 0 cols
    Eigen::VectorXd da;       // size N or 0
    double dpower = 0.0;
    double ds = 0.0;
};

namespace detail {

inline void sdf_backward_chunk(const FieldParams& p, const Eigen::Matrix3Xd& pts,
                               const Eigen::Ref<const Eigen::VectorXd>& dg,
                               const Eigen::Ref<const Eigen::Matrix3Xd>& dgrad, FieldGrads& grads) {
    const Eigen::Index n = pts.cols();
    const bool with_grad = dgrad.cols() == n;
    const Eigen::Index blocks = with_grad ? 4 : 1;
    MlpTape tape;
    Eigen::VectorXd g;
    Eigen::Matrix3Xd grad;
    sdf_forward_chunk(p, pts, with_grad, g, grad, &tape);

    const int L = p.sdf.n_layers();
    // Adjoint of the last layer's pre-activation (1 x 4N).
    Eigen::MatrixXd adjZ = Eigen::MatrixXd::Zero(1, blocks * n);
    if (dg.size() == n) adjZ.row(0).segment(0, n) = dg.transpose();
    if (with_grad)
        for (int k = 0; k < 3; ++k) adjZ.row(0).segment((k + 1) * n, n) = dgrad.row(k);

    for (int l = L - 1; l >= 0; --l) {
        const Eigen::MatrixXd& input = (l == 0) ? tape.E : tape.H[static_cast<std::size_t>(l - 1)];
        grads.sdf.W[l].noalias() += adjZ * input.transpose();
        grads.sdf.b[l].noalias() += adjZ.leftCols(n).rowwise().sum();
        if (l == 0) break;
        Eigen::MatrixXd adjH = p.sdf.W[l].transpose() * adjZ;  // (prev_out x 4N)
        // Through the softplus of layer l-1:
        //   h = sp(z), dh_k = sp'(z) .* dz_k
        //   adj_z  = sp'(z) .* adj_h + sum_k sp''(z) .* dz_k .* adj_dh_k
        //   adj_dz = sp'(z) .* adj_dh_k
        const Eigen::MatrixXd& Zprev = tape.Z[static_cast<std::size_t>(l - 1)];
        Eigen::MatrixXd next(adjH.rows(), adjH.cols());
        for (Eigen::Index c = 0; c < n; ++c) {
            for (Eigen::Index r = 0; r < adjH.rows(); ++r) {
                const double sig = softplus_d(Zprev(r, c), kSoftplusBeta);
                const double ddsig = kSoftplusBeta * sig * (1.0 - sig);  // sp''
                double az = sig * adjH(r, c);
                for (Eigen::Index blk = 1; blk < blocks; ++blk) {
                    const double dzk = Zprev(r, blk * n + c);
                    const double adh = adjH(r, blk * n + c);
                    az += ddsig * dzk * adh;
                    next(r, blk * n + c) = sig * adh;
                }
                next(r, c) = az;
            }
        }
        adjZ = std::move(next);
    }
}

inline void refl_backward_chunk(const FieldParams& p, const Eigen::Matrix3Xd& pts,
                                const Eigen::Ref<const Eigen::VectorXd>& da, FieldGrads& grads) {
    const Eigen::Index n = pts.cols();
    if (p.refl_frozen || p.refl.n_layers() == 0) return;  // frozen: no gradient
    MlpTape tape;
    Eigen::VectorXd a;
    refl_forward_chunk(p, pts, a, &tape);
    const int L = p.refl.n_layers();
    // Output map: a = softplus_1(z); da/dz = sigmoid(z).
    const Eigen::MatrixXd& Zout = tape.Z.back();
    Eigen::MatrixXd adjZ(1, n);
    for (Eigen::Index c = 0; c < n; ++c)
        adjZ(0, c) = da[c] * softplus_d(Zout(0, c), 1.0);
    for (int l = L - 1; l >= 0; --l) {
        const Eigen::MatrixXd& input = (l == 0) ? tape.E : tape.H[static_cast<std::size_t>(l - 1)];
        grads.refl.W[l].noalias() += adjZ * input.transpose();
        grads.refl.b[l].noalias() += adjZ.rowwise().sum();
        if (l == 0) break;
        Eigen::MatrixXd adjH = p.refl.W[l].transpose() * adjZ;
        const Eigen::MatrixXd& Zprev = tape.Z[static_cast<std::size_t>(l - 1)];
        adjZ = adjH.binaryExpr(Zprev, [](double ah, double z) {
            return ah * softplus_d(z, kSoftplusBeta);
        });
    }
}

}  // namespace detail

inline void field_backward(const FieldParams& p, const Eigen::Matrix3Xd& pts,
                           const FieldAdjoints& adj, FieldGrads& grads) {
    const Eigen::Index n = pts.cols();
    const Eigen::Index chunk = 512;
    const Eigen::Index n_blocks = n == 0 ? 0 : (n + chunk - 1) / chunk;
    const int nt = n_chunks(n_blocks);
    std::vector<FieldGrads> partial(static_cast<std::size_t>(std::max(nt, 1)),
                                    FieldGrads::zeros_like(p));
    parallel_for(n_blocks, [&](std::int64_t b0, std::int64_t b1, int tid) {
        FieldGrads& acc = partial[static_cast<std::size_t>(tid)];
        for (std::int64_t b = b0; b < b1; ++b) {
            const Eigen::Index i0 = b * chunk;
            const Eigen::Index len = std::min(chunk, n - i0);
            const Eigen::Matrix3Xd sub = pts.middleCols(i0, len);
            const bool has_dg = adj.dg.size() == n;
            const bool has_dgrad = adj.dgrad.cols() == n;
            Eigen::VectorXd dg_sub = has_dg ? adj.dg.segment(i0, len).eval() : Eigen::VectorXd();
            Eigen::Matrix3Xd dgrad_sub =
                has_dgrad ? adj.dgrad.middleCols(i0, len).eval() : Eigen::Matrix3Xd(3, 0);
            if (has_dg || has_dgrad)
                detail::sdf_backward_chunk(p, sub,
                                           has_dg ? dg_sub : Eigen::VectorXd::Zero(len).eval(),
                                           dgrad_sub, acc);
            if (adj.da.size() == n) detail::refl_backward_chunk(p, sub, adj.da.segment(i0, len), acc);
        }
    });
    for (int t = 0; t < nt; ++t) grads.add(partial[static_cast<std::size_t>(t)]);
    // exp reparameterizations
    grads.power_scalar += adj.dpower * p.power();
    grads.log_s += adj.ds * p.s();
}

// ---------------------------------------------------------------------------
// Initialization

// Geometric initialization: the fresh network approximates a sphere of
// radius r_init around the domain center. Hidden weights are Kaiming-normal,
// positional-encoding columns of the first layer start at zero, and the last
// layer is near-deterministic with mean sqrt(pi)/sqrt(fan_in).
inline void geometric_init(FieldParams& p, const std::vector<int>& hidden, double r_init_fraction,
                           Rng& rng) {
    std::vector<int> dims;
    dims.push_back(p.pe_dim());
    for (int h : hidden) dims.push_back(h);
    dims.push_back(1);
    p.sdf = Mlp::zeros(dims);
    const int L = p.sdf.n_layers();
    for (int l = 0; l < L; ++l) {
        auto& W = p.sdf.W[l];
        const double std_dev = std::sqrt(2.0) / std::sqrt(static_cast<double>(W.rows()));
        if (l == 0) {
            for (Eigen::Index r = 0; r < W.rows(); ++r)
                for (int c = 0; c < 3; ++c) W(r, c) = std_dev * rng.normal();
            // encoding columns remain zero
        } else if (l + 1 < L) {
            for (Eigen::Index r = 0; r < W.rows(); ++r)
                for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = std_dev * rng.normal();
        } else {
            const double mean = std::sqrt(kPi) / std::sqrt(static_cast<double>(W.cols()));
            for (Eigen::Index c = 0; c < W.cols(); ++c)
                W(0, c) = (mean + 1e-4 * rng.normal()) * p.domain.scale;
            p.sdf.b[l][0] = -r_init_fraction * p.domain.scale;
        }
    }
}

inline void refl_init(FieldParams& p, const std::vector<int>& hidden, Rng& rng) {
    std::vector<int> dims;
    dims.push_back(p.pe_dim());
    for (int h : hidden) dims.push_back(h);
    dims.push_back(1);
    p.refl = Mlp::zeros(dims);
    for (int l = 0; l < p.refl.n_layers(); ++l) {
        auto& W = p.refl.W[l];
        const double std_dev = std::sqrt(2.0) / std::sqrt(static_cast<double>(W.rows()));
        for (Eigen::Index r = 0; r < W.rows(); ++r)
            for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = 0.3 * std_dev * rng.normal();
    }
    // softplus_1(0.5413) ~= 1.0 so an untrained network starts near unit gain
    p.refl.b.back()[0] = 0.5413;
}

inline FieldParams make_field(const Aabb& domain_box, int pe_levels, const std::vector<int>& sdf_hidden,
                              const std::vector<int>& refl_hidden, std::uint64_t seed,
                              double s_init = 30.0, double r_init_fraction = 0.3) {
    FieldParams p;
    p.pe_levels = pe_levels;
    p.domain = DomainMap::from_box(domain_box);
    p.log_s = std::log(s_init);
    p.power_scalar = 0.0;
    p.refl_frozen = true;
    Rng rng(seed);
    geometric_init(p, sdf_hidden, r_init_fraction, rng);
    refl_init(p, refl_hidden, rng);
    return p;
}

// ---------------------------------------------------------------------------
// LoS prior (vision stand-in): a callable conventional SDF of the outermost
// surface, either analytic or an imported grid, plus the sphere seed used
// for the hidden interior during prior fitting.

struct LosPrior {
    std::function<double(const Vec3&)> sdf;
    Vec3 inner_center{0, 0, 0};   // seed sphere for the hidden region
    double inner_radius = 0.05;
    Aabb domain;
};

inline LosPrior prior_from_grid(const ScalarGrid3& grid, const Vec3& inner_center,
                                double inner_radius) {
    LosPrior prior;
    prior.sdf = [grid](const Vec3& x) { return grid.sample(x); };
    prior.inner_center = inner_center;
    prior.inner_radius = inner_radius;
    prior.domain.lo = grid.origin;
    prior.domain.hi = grid.origin + grid.pitch * Vec3(grid.nx - 1, grid.ny - 1, grid.nz - 1);
    return prior;
}

// Least-squares pre-fit of the SDF network: the prior on the LoS region
// (prior >= 0) and the seed sphere inside it. Returns the RMSE over held-out
// LoS points; throws FitDiverged if the fit misses the 5e-3 m contract.
struct PriorFitResult {
    double rmse_holdout = 0.0;
    int iters_run = 0;
};

inline PriorFitResult init_from_prior(FieldParams& p, const LosPrior& prior, int n_fit_points,
                                      int iters, std::uint64_t seed, double lr = 1e-3,
                                      double rmse_threshold = 5e-3) {
    PriorFitResult result;
    if (iters <= 0 || n_fit_points <= 0) return result;

    Rng rng(seed);
    const Aabb box = prior.domain;
    auto target_at = [&](const Vec3& x) {
        const double f = prior.sdf(x);
        if (f >= 0.0) return f;  // LoS region: match the prior exactly
        return (x - prior.inner_center).norm() - prior.inner_radius;
    };

    Eigen::Matrix3Xd pts(3, n_fit_points);
    Eigen::VectorXd target(n_fit_points);
    for (int i = 0; i < n_fit_points; ++i) {
        const Vec3 x = rng.uniform_in(box);
        pts.col(i) = x;
        target[i] = target_at(x);
    }
    const int n_hold = std::max(64, n_fit_points / 10);
    Eigen::Matrix3Xd hold(3, n_hold);
    Eigen::VectorXd hold_t(n_hold);
    for (int i = 0; i < n_hold; ++i) {
        Vec3 x = rng.uniform_in(box);
        int guard = 0;
        while (prior.sdf(x) < 0.0 && guard++ < 256) x = rng.uniform_in(box);  // held-out LoS points
        hold.col(i) = x;
        hold_t[i] = target_at(x);
    }

    AdamW opt;
    Eigen::VectorXd flat = p.to_flat();
    Eigen::VectorXd lr_scale;  // uniform
    const int batch = std::min(4096, n_fit_points);
    for (int it = 0; it < iters; ++it) {
        Eigen::Matrix3Xd bp(3, batch);
        Eigen::VectorXd bt(batch);
        for (int i = 0; i < batch; ++i) {
            const auto j = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(n_fit_points)));
            bp.col(i) = pts.col(j);
            bt[i] = target[j];
        }
        FieldEvalOut out;
        eval_field(p, bp, out, false, false);
        const Eigen::VectorXd resid = out.g - bt;
        FieldAdjoints adj;
        adj.dg = (2.0 / batch) * resid;
        FieldGrads grads = FieldGrads::zeros_like(p);
        field_backward(p, bp, adj, grads);
        Eigen::VectorXd gflat = grads.to_flat();
        // only the SDF network participates in the fit
        gflat.tail(gflat.size() - p.sdf_param_count()).setZero();
        opt.step(flat, gflat, lr, lr_scale);
        p.from_flat(flat);
        ++result.iters_run;
    }

    FieldEvalOut out;
    eval_field(p, hold, out, false, false);
    result.rmse_holdout = std::sqrt((out.g - hold_t).squaredNorm() / n_hold);
    if (!(result.rmse_holdout < rmse_threshold))
        throw FitDiverged("prior fit RMSE " + std::to_string(result.rmse_holdout) +
                          " exceeds threshold " + std::to_string(rmse_threshold));
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O. Header: magic, version, pe_levels, layer sizes for both
// networks, the frozen flag, log_s and power_scalar (f64); weights follow as
// little-endian float32 blobs (W row-major, then b, per layer).

inline constexpr std::uint32_t kFieldMagic = 0x46534C55u;  // "ULSF"

inline void save_checkpoint(const FieldParams& p, const std::string& path) {
    auto os = open_out(path);
    write_pod<std::uint32_t>(os, kFieldMagic);
    write_pod<std::uint32_t>(os, 1u);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(p.pe_levels));
    auto write_dims = [&](const Mlp& m) {
        const auto dims = m.dims();
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(dims.size()));
        for (int d : dims) write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    };
    write_dims(p.sdf);
    write_dims(p.refl);
    write_pod<std::uint8_t>(os, p.refl_frozen ? 1 : 0);
    write_pod<double>(os, p.log_s);
    write_pod<double>(os, p.power_scalar);
    auto write_mlp = [&](const Mlp& m) {
        for (int l = 0; l < m.n_layers(); ++l) {
            for (Eigen::Index r = 0; r < m.W[l].rows(); ++r)
                for (Eigen::Index c = 0; c < m.W[l].cols(); ++c)
                    write_pod<float>(os, static_cast<float>(m.W[l](r, c)));
            for (Eigen::Index r = 0; r < m.b[l].size(); ++r)
                write_pod<float>(os, static_cast<float>(m.b[l][r]));
        }
    };
    write_mlp(p.sdf);
    write_mlp(p.refl);
    if (!os) throw IoError("checkpoint write failed: " + path);
}

inline FieldParams load_checkpoint(const std::string& path, const DomainMap& domain) {
    auto is = open_in(path);
    if (read_pod<std::uint32_t>(is) != kFieldMagic) throw IoError("not a field checkpoint: " + path);
    if (read_pod<std::uint32_t>(is) != 1u) throw IoError("unsupported checkpoint version: " + path);
    FieldParams p;
    p.domain = domain;
    p.pe_levels = static_cast<int>(read_pod<std::uint32_t>(is));
    auto read_dims = [&]() {
        std::vector<int> dims(read_pod<std::uint32_t>(is));
        for (auto& d : dims) d = static_cast<int>(read_pod<std::uint32_t>(is));
        return dims;
    };
    const auto sdf_dims = read_dims();
    const auto refl_dims = read_dims();
    p.refl_frozen = read_pod<std::uint8_t>(is) != 0;
    p.log_s = read_pod<double>(is);
    p.power_scalar = read_pod<double>(is);
    p.sdf = Mlp::zeros(sdf_dims);
    p.refl = Mlp::zeros(refl_dims);
    auto read_mlp = [&](Mlp& m) {
        for (int l = 0; l < m.n_layers(); ++l) {
            for (Eigen::Index r = 0; r < m.W[l].rows(); ++r)
                for (Eigen::Index c = 0; c < m.W[l].cols(); ++c)
                    m.W[l](r, c) = static_cast<double>(read_pod<float>(is));
            for (Eigen::Index r = 0; r < m.b[l].size(); ++r)
                m.b[l][r] = static_cast<double>(read_pod<float>(is));
        }
    };
    read_mlp(p.sdf);
    read_mlp(p.refl);
    return p;
}

}  // namespace ulos
