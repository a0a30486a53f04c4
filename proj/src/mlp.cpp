#include "wfrflow/mlp.hpp"

#include <cmath>
#include <random>

#include "wfrflow/error.hpp"

namespace wfrflow {

std::vector<int> MlpArchitecture::widths() const {
  std::vector<int> w{inputs};
  for (int l = 0; l + 1 < layers; ++l) w.push_back(hidden);
  w.push_back(outputs);
  return w;
}

std::size_t MlpArchitecture::parameter_count() const {
  const auto w = widths();
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) n += static_cast<std::size_t>(w[l + 1]) * (w[l] + 1);
  return n;
}

Mlp::Mlp(const MlpArchitecture& arch) : arch_(arch) {
  if (arch.inputs < 1 || arch.outputs < 1 || arch.layers < 1 || arch.hidden < 1)
    throw InvalidArgument("network widths and depth must be positive");
  if (!(arch.leak >= 0.0)) throw InvalidArgument("activation leak must be non-negative");
  const auto w = arch.widths();
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    offsets_.push_back(off);
    off += static_cast<std::size_t>(w[l + 1]) * (w[l] + 1);
  }
  params_ = Vec::Zero(static_cast<Eigen::Index>(off));
}

Mlp::Mlp(const MlpArchitecture& arch, std::uint64_t seed) : Mlp(arch) {
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  std::mt19937_64 rng(seed);
  const auto w = arch.widths();
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(w[l]));
    std::uniform_real_distribution<double> u(-bound, bound);
    const std::size_t n = static_cast<std::size_t>(w[l + 1]) * (w[l] + 1);
    for (std::size_t k = 0; k < n; ++k) params_[static_cast<Eigen::Index>(offsets_[l] + k)] = u(rng);
  }
}

Matrix Mlp::forward(const Matrix& in, Tape* tape) const {
  if (in.rows() != arch_.inputs) throw InvalidArgument("network input has the wrong width");
  const auto w = arch_.widths();
  const std::size_t L = w.size() - 1;
  if (tape) {
    tape->inputs.resize(L);
    tape->pre.resize(L - 1);
  }
  Matrix a = in;
  for (std::size_t l = 0; l < L; ++l) {
    const double* p = params_.data() + offsets_[l];
    Eigen::Map<const Matrix> W(p, w[l + 1], w[l]);
    Eigen::Map<const Vec> b(p + static_cast<std::size_t>(w[l + 1]) * w[l], w[l + 1]);
    Matrix z = W * a;
    z.colwise() += b;
    if (tape) tape->inputs[l] = std::move(a);
    if (l + 1 == L) return z;
    a = z.unaryExpr([leak = arch_.leak](double v) { return v > 0.0 ? v : leak * v; });
    if (tape) tape->pre[l] = std::move(z);
  }
  return a;
}

void Mlp::backward(const Tape& tape, const Matrix& grad_out, Vec& grad) const {
  const auto w = arch_.widths();
  const std::size_t L = w.size() - 1;
  if (grad.size() != params_.size()) grad = Vec::Zero(params_.size());
  Matrix delta = grad_out;
  for (std::size_t l = L; l-- > 0;) {
    double* gp = grad.data() + offsets_[l];
    Eigen::Map<Matrix> gW(gp, w[l + 1], w[l]);
    Eigen::Map<Vec> gb(gp + static_cast<std::size_t>(w[l + 1]) * w[l], w[l + 1]);
    gW.noalias() += delta * tape.inputs[l].transpose();
    gb += delta.rowwise().sum();
    if (l == 0) break;
    Eigen::Map<const Matrix> W(params_.data() + offsets_[l], w[l + 1], w[l]);
    Matrix up = W.transpose() * delta;
    const Matrix& z = tape.pre[l - 1];
    delta = up.binaryExpr(z, [leak = arch_.leak](double d, double v) { return v > 0.0 ? d : leak * d; });
  }
}

Adam::Adam(std::size_t size, const AdamOptions& options)
    : opt_(options),
      m_(Vec::Zero(static_cast<Eigen::Index>(size))),
      v_(Vec::Zero(static_cast<Eigen::Index>(size))) {}

void Adam::step(Vec& params, const Vec& grad) {
  ++t_;
  m_ = opt_.beta1 * m_ + (1.0 - opt_.beta1) * grad;
  v_ = opt_.beta2 * v_ + (1.0 - opt_.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  params.array() -= opt_.learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + opt_.epsilon);
}

}  // namespace wfrflow
