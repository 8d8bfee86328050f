#pragma once

// Parameter registry and the handful of layers every module is built from.

#include "bdlf/autodiff.hpp"

#include <cmath>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bdlf {

using Rng = std::mt19937_64;

template <class T>
Matrix<T> random_normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng) * stddev);
  return m;
}

/// Ordered, named collection of every trainable matrix of a model.
template <class T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    ad::Var<T> var;
  };

  ad::Var<T> add(const std::string& name, Matrix<T> init) {
    if (index_.count(name) != 0) throw std::logic_error("duplicate parameter name: " + name);
    index_[name] = entries_.size();
    entries_.push_back({name, ad::parameter<T>(std::move(init))});
    return entries_.back().var;
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

  ad::Var<T> get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
    return entries_[it->second].var;
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  void zero_grad() {
    for (auto& e : entries_) e.var.zero_grad();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += static_cast<std::size_t>(e.var.value().size());
    return n;
  }

  std::map<std::string, Matrix<T>> snapshot() const {
    std::map<std::string, Matrix<T>> out;
    for (const auto& e : entries_) out.emplace(e.name, e.var.value());
    return out;
  }

  void load(const std::map<std::string, Matrix<T>>& values) {
    for (auto& e : entries_) {
      auto it = values.find(e.name);
      if (it == values.end()) throw std::runtime_error("missing parameter in snapshot: " + e.name);
      if (it->second.rows() != e.var.rows() || it->second.cols() != e.var.cols()) {
        throw std::runtime_error("parameter shape mismatch on load: " + e.name);
      }
      e.var.mutable_value() = it->second;
    }
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

/// x * W (+ b). Weight layout is [in x out].
template <class T>
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore<T>& store, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng,
         double init_std, bool bias = true) {
    weight_ = store.add(name + ".weight", random_normal<T>(in, out, init_std, rng));
    if (bias) bias_ = store.add(name + ".bias", Matrix<T>::Zero(1, out));
  }

  ad::Var<T> operator()(const ad::Var<T>& x) const {
    auto y = ad::matmul(x, weight_);
    return bias_.defined() ? ad::add_row(y, bias_) : y;
  }

  const ad::Var<T>& weight() const { return weight_; }
  const ad::Var<T>& bias() const { return bias_; }
  Eigen::Index in_features() const { return weight_.rows(); }
  Eigen::Index out_features() const { return weight_.cols(); }

 private:
  ad::Var<T> weight_;
  ad::Var<T> bias_;
};

/// A feature map stored one spatial site per row (see ad::SpatialShape).
template <class T>
struct FeatureMap {
  ad::Var<T> data;
  ad::SpatialShape shape;
  Eigen::Index channels() const { return data.cols(); }
};

/// k x k convolution, zero padding k/2, realized as im2col followed by a matmul.
template <class T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore<T>& store, const std::string& name, Eigen::Index in, Eigen::Index out,
         Eigen::Index kernel, Eigen::Index stride, Rng& rng, double init_std)
      : kernel_(kernel), stride_(stride),
        linear_(store, name, kernel * kernel * in, out, rng, init_std, true) {}

  FeatureMap<T> operator()(const FeatureMap<T>& x) const {
    const Eigen::Index pad = kernel_ / 2;
    ad::SpatialShape out_shape{x.shape.n, ad::conv_out_extent(x.shape.height, kernel_, stride_, pad),
                               ad::conv_out_extent(x.shape.width, kernel_, stride_, pad)};
    if (kernel_ == 1 && stride_ == 1) return {linear_(x.data), x.shape};
    auto cols = ad::im2col(x.data, x.shape, kernel_, stride_, pad);
    return {linear_(cols), out_shape};
  }

  const Linear<T>& linear() const { return linear_; }

 private:
  Eigen::Index kernel_ = 1;
  Eigen::Index stride_ = 1;
  Linear<T> linear_;
};

/// Row-wise layer normalization with learnable gain and shift.
template <class T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore<T>& store, const std::string& name, Eigen::Index width) {
    gamma_ = store.add(name + ".gamma", Matrix<T>::Ones(1, width));
    beta_ = store.add(name + ".beta", Matrix<T>::Zero(1, width));
  }

  ad::Var<T> operator()(const ad::Var<T>& x) const {
    return ad::add_row(ad::mul_row(ad::layer_norm_rows(x, eps()), gamma_), beta_);
  }

  static T eps() { return T(1e-5); }
  const ad::Var<T>& gamma() const { return gamma_; }
  const ad::Var<T>& beta() const { return beta_; }

 private:
  ad::Var<T> gamma_;
  ad::Var<T> beta_;
};

inline double he_std(Eigen::Index fan_in) { return std::sqrt(2.0 / static_cast<double>(fan_in)); }
inline double lecun_std(Eigen::Index fan_in) { return std::sqrt(1.0 / static_cast<double>(fan_in)); }

}  // namespace bdlf
