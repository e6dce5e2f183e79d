#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bytevq/error.hpp"

namespace bytevq {

// Row-major dense matrix of doubles. Vectors are stored as 1 x n or n x 1.
struct DenseMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  DenseMatrix() = default;
  DenseMatrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
  int size() const { return rows * cols; }
  void fill(double v) { std::fill(data.begin(), data.end(), v); }
  bool all_finite() const;
};

// Deterministic RNG built on mt19937_64. std::*_distribution output is
// implementation-defined, so uniform/gaussian draws are done by hand to keep
// seeded runs identical across platforms.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). n must be > 0.
  int uniform_int(int n);

  // Standard normal via Box-Muller (no cached spare, one draw per call).
  double gaussian();

 private:
  std::mt19937_64 engine_;
};

void fill_gaussian(DenseMatrix& m, Rng& rng, double stddev);

// A named trainable tensor with its gradient accumulator and Adam moments.
struct Tensor {
  std::string name;
  DenseMatrix value;
  DenseMatrix grad;
  DenseMatrix moment1;
  DenseMatrix moment2;
};

// Owns every trainable tensor of a model. Iteration is in name order so
// optimizer updates are independent of registration order. Single-writer:
// one training step mutates the store exclusively.
class ParamStore {
 public:
  Tensor& create(const std::string& name, int rows, int cols);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;
  void zero_grad();

  long step() const { return step_; }
  void advance_step() { ++step_; }
  void set_step(long s) { step_ = s; }

  template <typename F>
  void for_each(F&& f) {
    for (auto& [name, t] : tensors_) f(*t);
  }
  template <typename F>
  void for_each(F&& f) const {
    for (const auto& [name, t] : tensors_) f(*t);
  }

  size_t tensor_count() const { return tensors_.size(); }

 private:
  std::map<std::string, std::unique_ptr<Tensor>> tensors_;
  long step_ = 0;
};

struct OptimizerConfig {
  enum class Kind { kSgd, kAdam };
  Kind kind = Kind::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

// One deterministic update over every tensor in name order.
// Throws NumericError naming the parameter if any gradient is non-finite.
void optimizer_step(ParamStore& params, const OptimizerConfig& config);

struct SoftmaxXent {
  double loss = 0.0;
  std::vector<double> grad;  // softmax(logits) - onehot(target)
};

// Numerically stabilized -log softmax(logits)[target] and its logit gradient.
SoftmaxXent softmax_xent(std::span<const double> logits, int target);

// In-place softmax with max-subtraction.
void softmax_inplace(std::span<double> x);

double log_add(double a, double b);

struct GradCheckIssue {
  std::string param;
  int index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  int checked = 0;
  double max_rel_err = 0.0;
  std::vector<GradCheckIssue> flagged;
  bool passed() const { return flagged.empty(); }
};

// Central-difference check of every parameter entry against the analytic
// gradient produced by loss_with_grad. The callback must zero nothing itself:
// grads are cleared here before each analytic evaluation. Two evaluations at
// the unperturbed point must return the exact same loss or a NumericError is
// raised (non-deterministic loss function).
GradCheckReport grad_check(ParamStore& params,
                           const std::function<double(ParamStore&)>& loss_with_grad,
                           double epsilon, double tolerance);

}  // namespace bytevq
