#include "bytevq/numerics.hpp"

#include <cmath>
#include <limits>

namespace bytevq {

bool DenseMatrix::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

int Rng::uniform_int(int n) {
  if (n <= 0) throw InputError("Rng::uniform_int: n must be positive");
  // Rejection sampling to avoid modulo bias.
  const uint64_t un = static_cast<uint64_t>(n);
  const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  uint64_t v = engine_();
  while (v >= limit) v = engine_();
  return static_cast<int>(v % un);
}

double Rng::gaussian() {
  // Box-Muller; u clamped away from 0 so log stays finite.
  double u = uniform01();
  if (u < 1e-300) u = 1e-300;
  const double v = uniform01();
  return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * M_PI * v);
}

void fill_gaussian(DenseMatrix& m, Rng& rng, double stddev) {
  for (double& x : m.data) x = rng.gaussian() * stddev;
}

Tensor& ParamStore::create(const std::string& name, int rows, int cols) {
  if (tensors_.count(name)) throw InputError("ParamStore: duplicate tensor name " + name);
  auto t = std::make_unique<Tensor>();
  t->name = name;
  t->value = DenseMatrix(rows, cols);
  t->grad = DenseMatrix(rows, cols);
  t->moment1 = DenseMatrix(rows, cols);
  t->moment2 = DenseMatrix(rows, cols);
  Tensor& ref = *t;
  tensors_.emplace(name, std::move(t));
  return ref;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw InputError("ParamStore: unknown tensor " + name);
  return *it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw InputError("ParamStore: unknown tensor " + name);
  return *it->second;
}

bool ParamStore::contains(const std::string& name) const { return tensors_.count(name) > 0; }

void ParamStore::zero_grad() {
  for (auto& [name, t] : tensors_) t->grad.fill(0.0);
}

void OptimizerConfig::validate() const {
  if (learning_rate <= 0.0) throw ConfigError("optimizer: learning rate must be > 0");
  if (beta1 < 0.0 || beta1 >= 1.0) throw ConfigError("optimizer: beta1 out of [0, 1)");
  if (beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("optimizer: beta2 out of [0, 1)");
  if (epsilon <= 0.0) throw ConfigError("optimizer: epsilon must be > 0");
}

void optimizer_step(ParamStore& params, const OptimizerConfig& config) {
  config.validate();
  params.for_each([](const Tensor& t) {
    if (!t.grad.all_finite()) {
      throw NumericError("optimizer: non-finite gradient in parameter " + t.name);
    }
  });

  const long t_step = params.step() + 1;
  params.for_each([&](Tensor& t) {
    const size_t n = t.value.data.size();
    switch (config.kind) {
      case OptimizerConfig::Kind::kSgd:
        for (size_t i = 0; i < n; ++i) {
          t.value.data[i] -= config.learning_rate * t.grad.data[i];
        }
        break;
      case OptimizerConfig::Kind::kAdam: {
        const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(t_step));
        const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(t_step));
        for (size_t i = 0; i < n; ++i) {
          const double g = t.grad.data[i];
          double& m = t.moment1.data[i];
          double& v = t.moment2.data[i];
          m = config.beta1 * m + (1.0 - config.beta1) * g;
          v = config.beta2 * v + (1.0 - config.beta2) * g * g;
          const double m_hat = m / bc1;
          const double v_hat = v / bc2;
          t.value.data[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
        }
        break;
      }
    }
  });
  params.advance_step();
}

void softmax_inplace(std::span<double> x) {
  if (x.empty()) return;
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  double sum = 0.0;
  for (double& v : x) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : x) v /= sum;
}

SoftmaxXent softmax_xent(std::span<const double> logits, int target) {
  if (target < 0 || target >= static_cast<int>(logits.size())) {
    throw InputError("softmax_xent: target index out of range");
  }
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  SoftmaxXent out;
  out.grad.resize(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) {
    out.grad[i] = std::exp(logits[i] - mx);
    sum += out.grad[i];
  }
  for (double& g : out.grad) g /= sum;
  out.loss = -(logits[target] - mx - std::log(sum));
  out.grad[target] -= 1.0;
  return out;
}

double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

GradCheckReport grad_check(ParamStore& params,
                           const std::function<double(ParamStore&)>& loss_with_grad,
                           double epsilon, double tolerance) {
  if (epsilon <= 0.0) throw ConfigError("grad_check: epsilon must be > 0");

  auto eval = [&](bool keep_grads) {
    params.zero_grad();
    double loss = loss_with_grad(params);
    (void)keep_grads;
    return loss;
  };

  const double base = eval(true);
  // Snapshot analytic gradients before finite-difference probing clobbers them.
  std::map<std::string, std::vector<double>> analytic;
  params.for_each([&](const Tensor& t) { analytic[t.name] = t.grad.data; });

  const double repeat = eval(false);
  if (repeat != base) {
    throw NumericError("grad_check: loss function is not deterministic (two evaluations at the "
                       "same point differ)");
  }

  GradCheckReport report;
  params.for_each([&](Tensor& t) {
    const std::vector<double>& g = analytic[t.name];
    for (int i = 0; i < t.value.size(); ++i) {
      const double saved = t.value.data[i];
      t.value.data[i] = saved + epsilon;
      const double lp = eval(false);
      t.value.data[i] = saved - epsilon;
      const double lm = eval(false);
      t.value.data[i] = saved;

      const double fd = (lp - lm) / (2.0 * epsilon);
      const double denom = std::max({std::abs(fd), std::abs(g[i]), 1e-4});
      const double rel = std::abs(fd - g[i]) / denom;
      report.checked += 1;
      report.max_rel_err = std::max(report.max_rel_err, rel);
      if (rel > tolerance) {
        report.flagged.push_back({t.name, i, g[i], fd, rel});
      }
    }
  });

  // Leave the store holding the analytic gradients of the unperturbed point.
  params.zero_grad();
  loss_with_grad(params);
  return report;
}

}  // namespace bytevq
