#pragma once

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace birduod::models {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// Activations are (features x batch). Image features are laid out
// channel-major: index = (c * height + y) * width + x.

template <typename T>
struct Param {
    Matrix<T> value;
    Matrix<T> grad;

    void init(Eigen::Index rows, Eigen::Index cols) {
        value = Matrix<T>::Zero(rows, cols);
        grad = Matrix<T>::Zero(rows, cols);
    }
};

/// Geometry of a strided 2-D convolution over a (channels, in_h, in_w) map.
struct ConvGeometry {
    int channels = 0;
    int in_h = 0, in_w = 0;
    int kernel = 3, stride = 2, pad = 1;
    int out_h = 0, out_w = 0;

    int patch() const { return channels * kernel * kernel; }
    int in_size() const { return channels * in_h * in_w; }
    int positions() const { return out_h * out_w; }

    static int conv_out(int in, int kernel, int stride, int pad) { return (in + 2 * pad - kernel) / stride + 1; }
};

/// input (C*H*W x B) -> cols (C*k*k x B*OH*OW)
template <typename T>
void im2col(const ConvGeometry& g, const Matrix<T>& input, Matrix<T>& cols) {
    const auto batch = input.cols();
    const int p_count = g.positions();
    cols.resize(g.patch(), batch * p_count);
    for (Eigen::Index b = 0; b < batch; ++b) {
        const T* in = input.col(b).data();
        for (int oy = 0; oy < g.out_h; ++oy) {
            for (int ox = 0; ox < g.out_w; ++ox) {
                T* dst = cols.col(b * p_count + oy * g.out_w + ox).data();
                int row = 0;
                for (int c = 0; c < g.channels; ++c) {
                    const T* plane = in + c * g.in_h * g.in_w;
                    for (int ky = 0; ky < g.kernel; ++ky) {
                        const int iy = oy * g.stride - g.pad + ky;
                        for (int kx = 0; kx < g.kernel; ++kx, ++row) {
                            const int ix = ox * g.stride - g.pad + kx;
                            dst[row] = (iy >= 0 && iy < g.in_h && ix >= 0 && ix < g.in_w) ? plane[iy * g.in_w + ix]
                                                                                           : T(0);
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of im2col: scatters cols back onto a zeroed (C*H*W x B) map.
template <typename T>
void col2im(const ConvGeometry& g, const Matrix<T>& cols, Eigen::Index batch, Matrix<T>& out) {
    const int p_count = g.positions();
    out = Matrix<T>::Zero(g.in_size(), batch);
    for (Eigen::Index b = 0; b < batch; ++b) {
        T* dst_img = out.col(b).data();
        for (int oy = 0; oy < g.out_h; ++oy) {
            for (int ox = 0; ox < g.out_w; ++ox) {
                const T* src = cols.col(b * p_count + oy * g.out_w + ox).data();
                int row = 0;
                for (int c = 0; c < g.channels; ++c) {
                    T* plane = dst_img + c * g.in_h * g.in_w;
                    for (int ky = 0; ky < g.kernel; ++ky) {
                        const int iy = oy * g.stride - g.pad + ky;
                        for (int kx = 0; kx < g.kernel; ++kx, ++row) {
                            const int ix = ox * g.stride - g.pad + kx;
                            if (iy >= 0 && iy < g.in_h && ix >= 0 && ix < g.in_w) plane[iy * g.in_w + ix] += src[row];
                        }
                    }
                }
            }
        }
    }
}

/// (channels x B*P) -> (channels*P x B)
template <typename T>
void positions_to_features(const Matrix<T>& m, int positions, Eigen::Index batch, Matrix<T>& out) {
    const auto channels = m.rows();
    out.resize(channels * positions, batch);
    for (Eigen::Index b = 0; b < batch; ++b) {
        for (Eigen::Index c = 0; c < channels; ++c) {
            for (int p = 0; p < positions; ++p) out(c * positions + p, b) = m(c, b * positions + p);
        }
    }
}

/// (channels*P x B) -> (channels x B*P)
template <typename T>
void features_to_positions(const Matrix<T>& f, int channels, int positions, Matrix<T>& out) {
    const auto batch = f.cols();
    out.resize(channels, batch * positions);
    for (Eigen::Index b = 0; b < batch; ++b) {
        for (int c = 0; c < channels; ++c) {
            for (int p = 0; p < positions; ++p) out(c, b * positions + p) = f(c * positions + p, b);
        }
    }
}

template <typename T>
void uniform_init(Matrix<T>& m, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
}

template <typename T>
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(int in_c, int out_c, int in_h, int in_w, int kernel, int stride, int pad) : out_c_(out_c) {
        g_ = {in_c, in_h, in_w, kernel, stride, pad, ConvGeometry::conv_out(in_h, kernel, stride, pad),
              ConvGeometry::conv_out(in_w, kernel, stride, pad)};
        weight_.init(out_c, g_.patch());
        bias_.init(out_c, 1);
    }

    void init(std::mt19937_64& rng, double gain) { uniform_init(weight_.value, gain * std::sqrt(3.0 / g_.patch()), rng); }

    Matrix<T> forward(const Matrix<T>& x, bool train) const {
        Matrix<T> cols;
        im2col(g_, x, cols);
        Matrix<T> out = weight_.value * cols;
        out.colwise() += bias_.value.col(0);
        Matrix<T> y;
        positions_to_features(out, g_.positions(), x.cols(), y);
        if (train) cols_ = std::move(cols);
        return y;
    }

    Matrix<T> backward(const Matrix<T>& dy) {
        Matrix<T> d;
        features_to_positions(dy, out_c_, g_.positions(), d);
        weight_.grad.noalias() += d * cols_.transpose();
        bias_.grad.col(0) += d.rowwise().sum();
        Matrix<T> dcols = weight_.value.transpose() * d;
        Matrix<T> dx;
        col2im(g_, dcols, dy.cols(), dx);
        return dx;
    }

    std::vector<Param<T>*> params() { return {&weight_, &bias_}; }
    int out_channels() const { return out_c_; }
    int out_h() const { return g_.out_h; }
    int out_w() const { return g_.out_w; }
    int out_size() const { return out_c_ * g_.positions(); }

private:
    ConvGeometry g_;
    int out_c_ = 0;
    Param<T> weight_, bias_;
    mutable Matrix<T> cols_;
};

/// Transposed convolution: the adjoint of a Conv2d mapping (out_c, out_h,
/// out_w) down to (in_c, in_h, in_w). out_h/out_w pick the output padding.
template <typename T>
class ConvTranspose2d {
public:
    ConvTranspose2d() = default;
    ConvTranspose2d(int in_c, int out_c, int in_h, int in_w, int kernel, int stride, int pad, int out_h, int out_w)
        : in_c_(in_c), in_h_(in_h), in_w_(in_w) {
        g_ = {out_c, out_h, out_w, kernel, stride, pad, in_h, in_w};
        weight_.init(in_c, g_.patch());
        bias_.init(out_c, 1);
    }

    void init(std::mt19937_64& rng, double gain) {
        const double fan_in = static_cast<double>(in_c_) * g_.kernel * g_.kernel / (g_.stride * g_.stride);
        uniform_init(weight_.value, gain * std::sqrt(3.0 / fan_in), rng);
    }

    Matrix<T> forward(const Matrix<T>& x, bool train) const {
        Matrix<T> xr;
        features_to_positions(x, in_c_, in_h_ * in_w_, xr);
        Matrix<T> cols = weight_.value.transpose() * xr;
        Matrix<T> y;
        col2im(g_, cols, x.cols(), y);
        const int plane = g_.in_h * g_.in_w;
        for (int c = 0; c < g_.channels; ++c) y.middleRows(c * plane, plane).array() += bias_.value(c, 0);
        if (train) xr_ = std::move(xr);
        return y;
    }

    Matrix<T> backward(const Matrix<T>& dy) {
        Matrix<T> dcols;
        im2col(g_, dy, dcols);
        weight_.grad.noalias() += xr_ * dcols.transpose();
        const int plane = g_.in_h * g_.in_w;
        for (int c = 0; c < g_.channels; ++c) bias_.grad(c, 0) += dy.middleRows(c * plane, plane).sum();
        Matrix<T> dxr = weight_.value * dcols;
        Matrix<T> dx;
        positions_to_features(dxr, in_h_ * in_w_, dy.cols(), dx);
        return dx;
    }

    std::vector<Param<T>*> params() { return {&weight_, &bias_}; }

private:
    ConvGeometry g_;
    int in_c_ = 0, in_h_ = 0, in_w_ = 0;
    Param<T> weight_, bias_;
    mutable Matrix<T> xr_;
};

template <typename T>
class Linear {
public:
    Linear() = default;
    Linear(int in, int out) {
        weight_.init(out, in);
        bias_.init(out, 1);
    }

    void init(std::mt19937_64& rng, double gain) {
        uniform_init(weight_.value, gain * std::sqrt(3.0 / weight_.value.cols()), rng);
    }

    Matrix<T> forward(const Matrix<T>& x, bool train) const {
        Matrix<T> y = weight_.value * x;
        y.colwise() += bias_.value.col(0);
        if (train) x_ = x;
        return y;
    }

    Matrix<T> backward(const Matrix<T>& dy) {
        weight_.grad.noalias() += dy * x_.transpose();
        bias_.grad.col(0) += dy.rowwise().sum();
        return weight_.value.transpose() * dy;
    }

    std::vector<Param<T>*> params() { return {&weight_, &bias_}; }
    Param<T>& bias() { return bias_; }
    Param<T>& weight() { return weight_; }

private:
    Param<T> weight_, bias_;
    mutable Matrix<T> x_;
};

template <typename T>
class ReLU {
public:
    Matrix<T> forward(const Matrix<T>& x, bool train) const {
        Matrix<T> y = x.cwiseMax(T(0));
        if (train) x_ = x;
        return y;
    }
    Matrix<T> backward(const Matrix<T>& dy) const { return (x_.array() > T(0)).select(dy, T(0)); }

private:
    mutable Matrix<T> x_;
};

/// Adaptive-moment optimizer over an explicit parameter list.
template <typename T>
class Adam {
public:
    Adam() = default;
    Adam(std::vector<Param<T>*> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (auto* p : params_) {
            m_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
            v_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
        }
    }

    void step() {
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, t_);
        const double c2 = 1.0 - std::pow(beta2_, t_);
        const T step = static_cast<T>(lr_ * std::sqrt(c2) / c1);
        const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
        const T eps = static_cast<T>(eps_ * std::sqrt(c2));
        for (size_t i = 0; i < params_.size(); ++i) {
            auto& g = params_[i]->grad;
            m_[i] = b1 * m_[i] + (T(1) - b1) * g;
            v_[i] = b2 * v_[i] + (T(1) - b2) * g.cwiseProduct(g);
            params_[i]->value.array() -= step * m_[i].array() / (v_[i].array().sqrt() + eps);
        }
    }

    void zero_grad() {
        for (auto* p : params_) p->grad.setZero();
    }

private:
    std::vector<Param<T>*> params_;
    std::vector<Matrix<T>> m_, v_;
    double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    long t_ = 0;
};

}  // namespace birduod::models
