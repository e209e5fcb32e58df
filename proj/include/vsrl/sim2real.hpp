#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <deque>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vsrl/action.hpp"
#include "vsrl/env.hpp"
#include "vsrl/geometry.hpp"
#include "vsrl/physics.hpp"
#include "vsrl/policies.hpp"
#include "vsrl/stats.hpp"

namespace vsrl {

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

/// One row of an inverse-dynamics dataset.
/// input = (v_d, w_d, v_obs_prev, w_obs_prev), target = (V_l, V_r) in cm/s.
struct TrajectorySample {
    double t = 0.0;
    std::array<double, 4> input{};
    std::array<double, 2> target{};

    bool finite() const {
        for (double x : input)
            if (!std::isfinite(x)) return false;
        for (double x : target)
            if (!std::isfinite(x)) return false;
        return std::isfinite(t);
    }
    bool operator==(const TrajectorySample&) const = default;
};

inline constexpr const char* kTrajectoryHeader = "t,v_d,w_d,v_obs,w_obs,vl_cmd,vr_cmd";

inline void write_trajectory_csv(std::ostream& os, const std::vector<TrajectorySample>& samples) {
    os << kTrajectoryHeader << '\n';
    os << std::setprecision(17);
    for (const auto& s : samples) {
        os << s.t;
        for (double x : s.input) os << ',' << x;
        for (double x : s.target) os << ',' << x;
        os << '\n';
    }
}

inline void write_trajectory_csv(const std::string& path, const std::vector<TrajectorySample>& samples) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    write_trajectory_csv(f, samples);
    f.flush();
    if (!f) throw std::runtime_error("write failed: " + path);
}

/// Parses a trajectory log. `name` is used in error messages.
inline std::vector<TrajectorySample> read_trajectory_csv(std::istream& is, const std::string& name = "<stream>") {
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error(name + ": empty trajectory file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kTrajectoryHeader) throw std::runtime_error(name + ":1: unexpected header '" + line + "'");
    std::vector<TrajectorySample> out;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::array<double, 7> v{};
        std::size_t pos = 0;
        for (std::size_t k = 0; k < v.size(); ++k) {
            const std::size_t end = line.find(',', pos);
            if ((end == std::string::npos) != (k + 1 == v.size()))
                throw std::runtime_error(name + ":" + std::to_string(lineno) + ": expected 7 fields");
            const std::string field = line.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
            try {
                std::size_t used = 0;
                v[k] = std::stod(field, &used);
                if (used != field.size()) throw std::invalid_argument(field);
            } catch (const std::exception&) {
                throw std::runtime_error(name + ":" + std::to_string(lineno) + ": bad number '" + field + "'");
            }
            pos = end + 1;
        }
        TrajectorySample s{v[0], {v[1], v[2], v[3], v[4]}, {v[5], v[6]}};
        if (!s.finite()) throw std::runtime_error(name + ":" + std::to_string(lineno) + ": non-finite value");
        out.push_back(s);
    }
    return out;
}

inline std::vector<TrajectorySample> read_trajectory_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    return read_trajectory_csv(f, path);
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

enum class Activation : std::uint8_t { tanh = 1 };

struct DenseLayer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;    // out
};

struct Normalization {
    Eigen::VectorXd in_mean, in_scale, out_mean, out_scale;

    static Normalization identity(int n_in, int n_out) {
        return {Eigen::VectorXd::Zero(n_in), Eigen::VectorXd::Ones(n_in), Eigen::VectorXd::Zero(n_out),
                Eigen::VectorXd::Ones(n_out)};
    }
};

struct LossRecord {
    int epoch = 0;
    double train_loss = 0.0;  // MSE on normalized targets
    double val_loss = 0.0;
    double val_rmse = 0.0;  // de-normalized, cm/s
};

struct MLPParams {
    std::vector<DenseLayer> layers;
    Activation hidden = Activation::tanh;
    Normalization norm;
    std::vector<LossRecord> history;

    int input_size() const { return layers.empty() ? 0 : static_cast<int>(layers.front().weight.cols()); }
    int output_size() const { return layers.empty() ? 0 : static_cast<int>(layers.back().weight.rows()); }

    void validate() const {
        if (layers.empty()) throw std::invalid_argument("MLPParams: no layers");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const auto& l = layers[i];
            if (l.bias.size() != l.weight.rows()) throw std::invalid_argument("MLPParams: bias size mismatch");
            if (i > 0 && l.weight.cols() != layers[i - 1].weight.rows())
                throw std::invalid_argument("MLPParams: layer shapes do not chain");
        }
        const auto ok = [](const Eigen::VectorXd& v, Eigen::Index n, bool positive) {
            return v.size() == n && v.allFinite() && (!positive || (v.array() > 0.0).all());
        };
        if (!ok(norm.in_mean, input_size(), false) || !ok(norm.in_scale, input_size(), true) ||
            !ok(norm.out_mean, output_size(), false) || !ok(norm.out_scale, output_size(), true))
            throw std::invalid_argument("MLPParams: bad normalization statistics");
    }

    /// Glorot-uniform weights, zero biases, identity normalization.
    static MLPParams init(const std::vector<int>& sizes, Rng& rng) {
        if (sizes.size() < 2) throw std::invalid_argument("MLPParams::init: need at least two sizes");
        MLPParams p;
        for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
            const int n_in = sizes[i];
            const int n_out = sizes[i + 1];
            if (n_in <= 0 || n_out <= 0) throw std::invalid_argument("MLPParams::init: sizes must be positive");
            const double a = std::sqrt(6.0 / (n_in + n_out));
            DenseLayer l{Eigen::MatrixXd(n_out, n_in), Eigen::VectorXd::Zero(n_out)};
            for (int r = 0; r < n_out; ++r)
                for (int c = 0; c < n_in; ++c) l.weight(r, c) = rng.uniform(-a, a);
            p.layers.push_back(std::move(l));
        }
        p.norm = Normalization::identity(sizes.front(), sizes.back());
        return p;
    }

    bool same_weights(const MLPParams& o) const {
        if (layers.size() != o.layers.size()) return false;
        for (std::size_t i = 0; i < layers.size(); ++i)
            if (layers[i].weight != o.layers[i].weight || layers[i].bias != o.layers[i].bias) return false;
        return norm.in_mean == o.norm.in_mean && norm.in_scale == o.norm.in_scale &&
               norm.out_mean == o.norm.out_mean && norm.out_scale == o.norm.out_scale;
    }
};

inline constexpr std::array<int, 4> kDefaultLayerSizes{4, 64, 64, 2};

/// Batch forward pass in normalized space. Columns are samples.
inline Eigen::MatrixXd mlp_forward_normalized(const MLPParams& p, const Eigen::MatrixXd& x) {
    Eigen::MatrixXd h = x;
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        Eigen::MatrixXd z = p.layers[i].weight * h;
        z.colwise() += p.layers[i].bias;
        h = i + 1 < p.layers.size() ? Eigen::MatrixXd(z.array().tanh()) : z;
    }
    return h;
}

inline Eigen::VectorXd mlp_forward(const MLPParams& p, const Eigen::VectorXd& input) {
    if (p.layers.empty() || input.size() != p.input_size())
        throw std::invalid_argument("mlp_forward: expected " + std::to_string(p.input_size()) + " inputs, got " +
                                    std::to_string(input.size()));
    const Eigen::VectorXd x = (input - p.norm.in_mean).cwiseQuotient(p.norm.in_scale);
    const Eigen::VectorXd y = mlp_forward_normalized(p, x);
    return y.cwiseProduct(p.norm.out_scale) + p.norm.out_mean;
}

inline std::array<double, 2> mlp_forward(const MLPParams& p, const std::array<double, 4>& input) {
    const Eigen::VectorXd y = mlp_forward(p, Eigen::Map<const Eigen::VectorXd>(input.data(), 4));
    if (y.size() != 2) throw std::invalid_argument("mlp_forward: network does not produce 2 outputs");
    return {y(0), y(1)};
}

/// Gradients with the same shapes as MLPParams::layers.
using MLPGradients = std::vector<DenseLayer>;

/// Mean squared error over all outputs of a normalized batch, and its
/// gradient with respect to every weight and bias.
inline double mlp_loss_and_grad(const MLPParams& p, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                MLPGradients* grad) {
    const std::size_t n_layers = p.layers.size();
    std::vector<Eigen::MatrixXd> acts;
    acts.reserve(n_layers + 1);
    acts.push_back(x);
    for (std::size_t i = 0; i < n_layers; ++i) {
        Eigen::MatrixXd z = p.layers[i].weight * acts.back();
        z.colwise() += p.layers[i].bias;
        acts.push_back(i + 1 < n_layers ? Eigen::MatrixXd(z.array().tanh()) : z);
    }
    const Eigen::MatrixXd err = acts.back() - y;
    const double count = static_cast<double>(err.size());
    const double loss = err.squaredNorm() / count;
    if (!grad) return loss;

    grad->resize(n_layers);
    Eigen::MatrixXd delta = err * (2.0 / count);
    for (std::size_t k = n_layers; k-- > 0;) {
        (*grad)[k].weight = delta * acts[k].transpose();
        (*grad)[k].bias = delta.rowwise().sum();
        if (k > 0) {
            delta = p.layers[k].weight.transpose() * delta;
            delta.array() *= 1.0 - acts[k].array().square();
        }
    }
    return loss;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
    int epochs = 60;
    int batch_size = 64;
    double learning_rate = 3e-3;
    double final_lr_fraction = 0.05;  // cosine decay floor
    std::uint64_t seed = 1;
    double validation_fraction = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::vector<int> layer_sizes{kDefaultLayerSizes.begin(), kDefaultLayerSizes.end()};

    void validate() const {
        if (epochs < 1 || batch_size < 1) throw std::invalid_argument("TrainConfig: epochs and batch size must be positive");
        if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning rate must be positive");
        if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
            throw std::invalid_argument("TrainConfig: validation fraction must lie in (0, 1)");
        if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
            throw std::invalid_argument("TrainConfig: moment coefficients must lie in [0, 1)");
        if (!(final_lr_fraction >= 0.0 && final_lr_fraction <= 1.0))
            throw std::invalid_argument("TrainConfig: final_lr_fraction must lie in [0, 1]");
        if (layer_sizes.size() < 2 || layer_sizes.front() != 4 || layer_sizes.back() != 2)
            throw std::invalid_argument("TrainConfig: layers must map 4 inputs to 2 outputs");
    }
};

class AdamOptimizer {
public:
    AdamOptimizer(const MLPParams& p, double beta1, double beta2, double eps) : b1_(beta1), b2_(beta2), eps_(eps) {
        for (const auto& l : p.layers) {
            m_.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())});
            v_.push_back(m_.back());
        }
    }

    void step(MLPParams& p, const MLPGradients& g, double lr) {
        ++t_;
        const double c1 = 1.0 - std::pow(b1_, t_);
        const double c2 = 1.0 - std::pow(b2_, t_);
        for (std::size_t i = 0; i < p.layers.size(); ++i) {
            update(p.layers[i].weight, g[i].weight, m_[i].weight, v_[i].weight, lr, c1, c2);
            update(p.layers[i].bias, g[i].bias, m_[i].bias, v_[i].bias, lr, c1, c2);
        }
    }

private:
    template <class T>
    void update(T& w, const T& g, T& m, T& v, double lr, double c1, double c2) const {
        m = b1_ * m + (1.0 - b1_) * g;
        v.array() = b2_ * v.array() + (1.0 - b2_) * g.array().square();
        w.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
    }

    double b1_, b2_, eps_;
    int t_ = 0;
    std::vector<DenseLayer> m_, v_;
};

namespace detail {

inline void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
}

inline Eigen::MatrixXd gather(const std::vector<TrajectorySample>& data, const std::vector<std::size_t>& idx,
                              std::size_t begin, std::size_t end, bool inputs, const Eigen::VectorXd& mean,
                              const Eigen::VectorXd& scale) {
    const int rows = inputs ? 4 : 2;
    Eigen::MatrixXd m(rows, static_cast<Eigen::Index>(end - begin));
    for (std::size_t j = begin; j < end; ++j) {
        const auto& s = data[idx[j]];
        for (int r = 0; r < rows; ++r) {
            const double v = inputs ? s.input[r] : s.target[r];
            m(r, static_cast<Eigen::Index>(j - begin)) = (v - mean(r)) / scale(r);
        }
    }
    return m;
}

}  // namespace detail

/// Trains the inverse-dynamics network with mini-batch Adam on the MSE of
/// normalized targets. Deterministic for a given dataset and seed.
inline MLPParams mlp_train(const std::vector<TrajectorySample>& data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw std::invalid_argument("mlp_train: empty dataset");
    for (std::size_t i = 0; i < data.size(); ++i)
        if (!data[i].finite()) throw std::invalid_argument("mlp_train: non-finite sample at index " + std::to_string(i));

    Rng rng(cfg.seed);
    std::vector<std::size_t> idx(data.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    detail::shuffle_indices(idx, rng);
    std::size_t n_val = static_cast<std::size_t>(std::llround(cfg.validation_fraction * static_cast<double>(data.size())));
    if (data.size() >= 2) n_val = std::clamp<std::size_t>(n_val, 1, data.size() - 1);
    else n_val = 0;
    std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
    if (val.empty()) val = train;

    MLPParams p = MLPParams::init(cfg.layer_sizes, rng);
    Normalization& nm = p.norm;
    nm = Normalization::identity(4, 2);
    {
        Eigen::VectorXd s_in = Eigen::VectorXd::Zero(4), s_out = Eigen::VectorXd::Zero(2);
        for (std::size_t i : train) {
            for (int r = 0; r < 4; ++r) nm.in_mean(r) += data[i].input[r];
            for (int r = 0; r < 2; ++r) nm.out_mean(r) += data[i].target[r];
        }
        const double n = static_cast<double>(train.size());
        nm.in_mean /= n;
        nm.out_mean /= n;
        for (std::size_t i : train) {
            for (int r = 0; r < 4; ++r) s_in(r) += std::pow(data[i].input[r] - nm.in_mean(r), 2);
            for (int r = 0; r < 2; ++r) s_out(r) += std::pow(data[i].target[r] - nm.out_mean(r), 2);
        }
        const auto scale = [n](double ss) {
            const double sd = std::sqrt(ss / n);
            return sd > 1e-9 ? sd : 1.0;
        };
        for (int r = 0; r < 4; ++r) nm.in_scale(r) = scale(s_in(r));
        for (int r = 0; r < 2; ++r) nm.out_scale(r) = scale(s_out(r));
    }

    std::vector<std::size_t> val_order(val.size());
    for (std::size_t i = 0; i < val.size(); ++i) val_order[i] = i;
    const Eigen::MatrixXd xv = detail::gather(data, val, 0, val.size(), true, nm.in_mean, nm.in_scale);
    const Eigen::MatrixXd yv = detail::gather(data, val, 0, val.size(), false, nm.out_mean, nm.out_scale);
    const auto evaluate = [&](int epoch, double train_loss) {
        const Eigen::MatrixXd pred = mlp_forward_normalized(p, xv);
        const Eigen::MatrixXd err = (pred - yv).array().colwise() * nm.out_scale.array();
        p.history.push_back({epoch, train_loss, (pred - yv).squaredNorm() / static_cast<double>(yv.size()),
                             std::sqrt(err.squaredNorm() / static_cast<double>(err.size()))});
    };
    {
        const Eigen::MatrixXd xt = detail::gather(data, train, 0, train.size(), true, nm.in_mean, nm.in_scale);
        const Eigen::MatrixXd yt = detail::gather(data, train, 0, train.size(), false, nm.out_mean, nm.out_scale);
        evaluate(0, mlp_loss_and_grad(p, xt, yt, nullptr));
    }

    AdamOptimizer opt(p, cfg.beta1, cfg.beta2, cfg.adam_epsilon);
    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
    const std::size_t batches_per_epoch = (train.size() + bs - 1) / bs;
    const double total_steps = static_cast<double>(batches_per_epoch) * cfg.epochs;
    std::size_t step = 0;
    MLPGradients grad;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        detail::shuffle_indices(train, rng);
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < train.size(); b += bs) {
            const std::size_t e = std::min(train.size(), b + bs);
            const Eigen::MatrixXd xb = detail::gather(data, train, b, e, true, nm.in_mean, nm.in_scale);
            const Eigen::MatrixXd yb = detail::gather(data, train, b, e, false, nm.out_mean, nm.out_scale);
            loss_sum += mlp_loss_and_grad(p, xb, yb, &grad) * static_cast<double>(e - b);
            const double progress = static_cast<double>(step++) / total_steps;
            const double lr = cfg.learning_rate *
                              (cfg.final_lr_fraction + (1.0 - cfg.final_lr_fraction) * 0.5 * (1.0 + std::cos(kPi * progress)));
            opt.step(p, grad, lr);
        }
        evaluate(epoch, loss_sum / static_cast<double>(train.size()));
    }
    return p;
}

// ---------------------------------------------------------------------------
// Model file
// ---------------------------------------------------------------------------

inline constexpr char kModelMagic[6] = {'V', 'S', 'M', 'L', 'P', '1'};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f64(std::string& out, double d) {
    const auto bits = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

class ByteReader {
public:
    explicit ByteReader(const std::string& s) : s_(s) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    double f64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return std::bit_cast<double>(v);
    }
    std::size_t remaining() const { return s_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (s_.size() - pos_ < n) throw std::runtime_error("model file truncated");
    }
    const std::string& s_;
    std::size_t pos_ = sizeof(kModelMagic);
};

}  // namespace detail

/// Layout: magic, u32 layer count, per layer u32 (in, out), then per layer the
/// row-major weights followed by the biases, then input mean, input scale,
/// output mean, output scale. All little-endian.
inline std::string encode_model(const MLPParams& p) {
    p.validate();
    std::string out(kModelMagic, sizeof(kModelMagic));
    detail::put_u32(out, static_cast<std::uint32_t>(p.layers.size()));
    for (const auto& l : p.layers) {
        detail::put_u32(out, static_cast<std::uint32_t>(l.weight.cols()));
        detail::put_u32(out, static_cast<std::uint32_t>(l.weight.rows()));
    }
    for (const auto& l : p.layers) {
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) detail::put_f64(out, l.weight(r, c));
        for (Eigen::Index r = 0; r < l.bias.size(); ++r) detail::put_f64(out, l.bias(r));
    }
    for (const auto* v : {&p.norm.in_mean, &p.norm.in_scale, &p.norm.out_mean, &p.norm.out_scale})
        for (Eigen::Index i = 0; i < v->size(); ++i) detail::put_f64(out, (*v)(i));
    return out;
}

inline MLPParams decode_model(const std::string& bytes) {
    if (bytes.size() < sizeof(kModelMagic) || std::memcmp(bytes.data(), kModelMagic, sizeof(kModelMagic)) != 0)
        throw std::runtime_error("not a VSMLP1 model file (bad magic or version)");
    detail::ByteReader rd(bytes);
    const std::uint32_t n_layers = rd.u32();
    if (n_layers == 0 || n_layers > 64) throw std::runtime_error("model file: implausible layer count");
    std::vector<std::pair<std::uint32_t, std::uint32_t>> dims;
    for (std::uint32_t i = 0; i < n_layers; ++i) {
        const std::uint32_t in = rd.u32();
        const std::uint32_t out = rd.u32();
        if (in == 0 || out == 0 || in > 4096 || out > 4096) throw std::runtime_error("model file: implausible layer size");
        if (i > 0 && in != dims.back().second) throw std::runtime_error("model file: layer shapes do not chain");
        dims.emplace_back(in, out);
    }
    MLPParams p;
    for (const auto& [in, out] : dims) {
        DenseLayer l{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = rd.f64();
        for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = rd.f64();
        p.layers.push_back(std::move(l));
    }
    const int n_in = static_cast<int>(dims.front().first);
    const int n_out = static_cast<int>(dims.back().second);
    p.norm = Normalization::identity(n_in, n_out);
    for (auto* v : {&p.norm.in_mean, &p.norm.in_scale, &p.norm.out_mean, &p.norm.out_scale})
        for (Eigen::Index i = 0; i < v->size(); ++i) (*v)(i) = rd.f64();
    if (rd.remaining() != 0) throw std::runtime_error("model file: trailing bytes");
    try {
        p.validate();
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(std::string("model file: ") + e.what());
    }
    return p;
}

inline void save_model(const MLPParams& p, const std::string& path) {
    const std::string bytes = encode_model(p);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

inline MLPParams load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open model " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return decode_model(ss.str());
}

// ---------------------------------------------------------------------------
// Plant
// ---------------------------------------------------------------------------

/// Perturbations applied between a wheel command and the simulated motors:
/// command latency, then dead zone, then gain, then clamping and noise.
struct PseudoRealPlant {
    double gain_left = 1.0;
    double gain_right = 1.0;
    double dead_zone_left = 0.0;  // command units; |c| <= dead_zone -> 0
    double dead_zone_right = 0.0;
    int latency_steps = 0;
    double noise_scale = 0.0;  // sd of additive command noise, command units

    static PseudoRealPlant identity() { return {}; }
    static PseudoRealPlant perturbed() { return {0.8, 1.2, 5.0, 5.0, 1, 0.0}; }

    void validate() const {
        if (!(gain_left > 0.0 && gain_right > 0.0)) throw std::invalid_argument("plant gains must be positive");
        if (!(dead_zone_left >= 0.0 && dead_zone_right >= 0.0)) throw std::invalid_argument("plant dead zone must be >= 0");
        if (latency_steps < 0) throw std::invalid_argument("plant latency must be >= 0");
        if (!(noise_scale >= 0.0)) throw std::invalid_argument("plant noise scale must be >= 0");
    }

    bool is_identity() const {
        return gain_left == 1.0 && gain_right == 1.0 && dead_zone_left == 0.0 && dead_zone_right == 0.0 &&
               latency_steps == 0 && noise_scale == 0.0;
    }
};

/// Stateful instance of a plant for one robot.
class PlantChannel {
public:
    explicit PlantChannel(const PseudoRealPlant& plant, std::uint64_t seed = 0) : plant_(plant), rng_(seed) {
        plant_.validate();
        for (int i = 0; i < plant_.latency_steps; ++i) queue_.emplace_back();
    }

    WheelCommand apply(const WheelCommand& c) {
        queue_.push_back(c);
        const WheelCommand d = queue_.front();
        queue_.pop_front();
        const auto shape = [&](double v, double dz, double gain) {
            if (std::abs(v) <= dz) return 0.0;
            v *= gain;
            if (plant_.noise_scale > 0.0) v += rng_.normal(0.0, plant_.noise_scale);
            return v;
        };
        return {shape(d.left(), plant_.dead_zone_left, plant_.gain_left),
                shape(d.right(), plant_.dead_zone_right, plant_.gain_right)};
    }

    const PseudoRealPlant& plant() const { return plant_; }

private:
    PseudoRealPlant plant_;
    Rng rng_;
    std::deque<WheelCommand> queue_;
};

/// Measured body speeds of a robot: signed forward speed and turn rate.
inline std::array<double, 2> measured_twist(const RobotState& r) { return {r.forward_speed(), r.twist.omega}; }

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

/// What fills the "previous" input pair.
enum class PrevInput {
    observed,  // (v, w) measured at the previous step
    command,   // (v, w) implied by the previous wheel command
};

struct CollectConfig {
    double duration = 30.0;  // s
    int hold = 5;            // control steps per excitation value
    double amplitude = 100.0;  // command units
    std::uint64_t seed = 1;
    PrevInput prev = PrevInput::observed;
};

/// Drives one robot through the plant with random piecewise-constant wheel
/// commands. Row k holds the speeds measured after step k, the speeds
/// measured before it, and the command sent at step k (in cm/s).
/// `excitation` overrides the random source when provided.
inline std::vector<TrajectorySample> collect_trajectories(const PseudoRealPlant& plant, const SimSpec& spec,
                                                          const CollectConfig& cfg,
                                                          const std::function<WheelCommand(int)>& excitation = {}) {
    if (!(cfg.duration >= 0.0) || cfg.hold < 1) throw std::invalid_argument("collect: bad duration or hold");
    SimSpec s = spec;
    s.physics.walls_enabled = false;
    const double dt = s.physics.control_dt;
    const auto steps = static_cast<int>(std::llround(cfg.duration / dt));
    const double scale = s.robot.v_max / 100.0;
    const double recenter = std::min(s.field.play_half_length, s.field.half_width) * 0.6;

    WorldState w;
    w.robots_blue.push_back(make_robot(0, Team::blue, Pose2D{}));
    w.ball.position = s.field.goal_center_own();
    w.ball.radius = s.ball.radius;

    RandomPolicy random(cfg.seed, cfg.hold);
    PlantChannel channel(plant, cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<TrajectorySample> out;
    out.reserve(static_cast<std::size_t>(std::max(steps, 0)));
    auto prev = measured_twist(w.robots_blue[0]);
    std::array<double, 2> prev_cmd{0.0, 0.0};
    for (int k = 0; k < steps; ++k) {
        WheelCommand c = excitation ? excitation(k) : random.next();
        if (!excitation && cfg.amplitude < 100.0) c = {c.left() * cfg.amplitude / 100.0, c.right() * cfg.amplitude / 100.0};
        const WheelCommand applied = channel.apply(c);
        w = step_world(w, std::span<const WheelCommand>(&applied, 1), s);
        auto& r = w.robots_blue[0];
        if (std::abs(r.pose.x) > recenter || std::abs(r.pose.y) > recenter) {
            r.pose.x = 0.0;
            r.pose.y = 0.0;
        }
        const auto now = measured_twist(r);
        const double vl = c.left() * scale;
        const double vr = c.right() * scale;
        const std::array<double, 2> p = cfg.prev == PrevInput::observed ? prev : prev_cmd;
        out.push_back({w.elapsed, {now[0], now[1], p[0], p[1]}, {vl, vr}});
        prev = now;
        prev_cmd = {(vl + vr) / 2.0, (vr - vl) / s.robot.axle_length};
    }
    return out;
}

/// Synthetic dataset from exact inverse kinematics: desired speeds drawn so
/// both wheels stay within v_max; the previous-speed inputs are independent
/// draws and carry no information.
inline std::vector<TrajectorySample> identity_dataset(std::size_t n, const RobotSpec& robot, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<TrajectorySample> out;
    out.reserve(n);
    const double vm = robot.v_max;
    const double L = robot.axle_length;
    for (std::size_t i = 0; i < n; ++i) {
        const double vl = rng.uniform(-vm, vm);
        const double vr = rng.uniform(-vm, vm);
        const double pl = rng.uniform(-vm, vm);
        const double pr = rng.uniform(-vm, vm);
        out.push_back({static_cast<double>(i), {(vl + vr) / 2.0, (vr - vl) / L, (pl + pr) / 2.0, (pr - pl) / L}, {vl, vr}});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Deployment
// ---------------------------------------------------------------------------

/// Wheel command that should realize `desired` given the speeds observed at
/// the previous step.
inline WheelCommand adapt(const MLPParams& p, const HighLevelAction& desired, std::array<double, 2> observed_prev,
                          double v_max) {
    const auto y = mlp_forward(p, std::array<double, 4>{desired.v, desired.omega, observed_prev[0], observed_prev[1]});
    return wheels_to_command({y[0], y[1]}, v_max);
}

struct EvalConfig {
    int episodes = 30;
    std::uint64_t seed = 2024;
    double max_duration = 300.0;  // s
    PrevInput prev = PrevInput::observed;
};

struct ArmResult {
    std::vector<double> steps;  // steps to goal, capped episodes count as the cap
    int goals = 0;
    int episodes = 0;
    MeanSd summary;
};

/// Runs the scripted striker on a single-robot field through `plant`,
/// optionally routing its desired speeds through the adaptor.
inline ArmResult eval_closed_loop(const SimSpec& spec, const PseudoRealPlant& plant, const MLPParams* adaptor,
                                  const EvalConfig& cfg) {
    plant.validate();
    if (adaptor) adaptor->validate();
    ArmResult res;
    for (int ep = 0; ep < cfg.episodes; ++ep) {
        EpisodeConfig ec;
        ec.reset_mode = ResetMode::uniform_random;
        ec.with_opponents = false;
        ec.end_on_goal = true;
        ec.max_duration = cfg.max_duration;
        ec.seed = cfg.seed + static_cast<std::uint64_t>(ep);
        SoccerEnv env(spec, ec);
        env.reset();
        BallToGoalPolicy policy(env.spec());
        PlantChannel channel(plant, ec.seed * 7919);
        const double L = env.spec().robot.axle_length;
        const double vm = env.spec().robot.v_max;
        std::array<double, 2> prev_cmd{0.0, 0.0};
        int steps = 0;
        bool scored = false;
        while (!env.done()) {
            const RobotState& self = env.world().robots_blue[0];
            const HighLevelAction hl = policy(env.world(), self);
            WheelCommand cmd;
            if (adaptor) {
                const auto obs = cfg.prev == PrevInput::observed ? measured_twist(self) : prev_cmd;
                cmd = adapt(*adaptor, hl, obs, vm);
            } else {
                cmd = continuous_to_wheels(hl, L, vm);
            }
            const double vl = cmd.left() * vm / 100.0;
            const double vr = cmd.right() * vm / 100.0;
            prev_cmd = {(vl + vr) / 2.0, (vr - vl) / L};
            const std::vector<AgentAction> a{channel.apply(cmd)};
            const auto r = env.step(a);
            ++steps;
            if (r.info.goal && *r.info.goal == Team::blue) scored = true;
        }
        ++res.episodes;
        if (scored) ++res.goals;
        res.steps.push_back(static_cast<double>(steps));
    }
    res.summary = mean_sd(res.steps);
    return res;
}

struct AdaptorReport {
    ArmResult baseline;   // unperturbed plant, no adaptor
    ArmResult perturbed;  // perturbed plant, no adaptor
    ArmResult adapted;    // perturbed plant, adaptor
    double ratio = 0.0;   // adapted mean / perturbed mean
    TTestResult vs_perturbed;
    TTestResult vs_baseline;
};

inline AdaptorReport compare_adaptor(const SimSpec& spec, const PseudoRealPlant& plant, const MLPParams& adaptor,
                                     const EvalConfig& cfg) {
    AdaptorReport r;
    r.baseline = eval_closed_loop(spec, PseudoRealPlant::identity(), nullptr, cfg);
    r.perturbed = eval_closed_loop(spec, plant, nullptr, cfg);
    r.adapted = eval_closed_loop(spec, plant, &adaptor, cfg);
    r.ratio = r.adapted.summary.mean / r.perturbed.summary.mean;
    r.vs_perturbed = welch_t_test(r.adapted.steps, r.perturbed.steps);
    r.vs_baseline = welch_t_test(r.adapted.steps, r.baseline.steps);
    return r;
}

}  // namespace vsrl
