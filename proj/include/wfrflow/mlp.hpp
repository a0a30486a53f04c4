#pragma once

// Fully connected network with LeakyReLU hidden activations and a linear
// output layer. Parameters live in one flat vector, layer by layer, each layer
// a column-major weight matrix followed by its bias.

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "wfrflow/types.hpp"

namespace wfrflow {

using Matrix = Eigen::MatrixXd;

struct MlpArchitecture {
  int inputs = 1;
  int outputs = 1;
  int layers = 5;  // linear layers, so layers - 1 hidden activations
  int hidden = 256;
  double leak = 0.01;

  std::vector<int> widths() const;
  std::size_t parameter_count() const;
  friend bool operator==(const MlpArchitecture&, const MlpArchitecture&) = default;
};

class Mlp {
public:
  // Activations kept for the backward pass; columns are samples.
  struct Tape {
    std::vector<Matrix> inputs;  // input to each linear layer
    std::vector<Matrix> pre;     // pre-activation of each hidden layer
  };

  Mlp() = default;
  explicit Mlp(const MlpArchitecture& arch);
  Mlp(const MlpArchitecture& arch, std::uint64_t seed);

  const MlpArchitecture& architecture() const { return arch_; }
  Vec& parameters() { return params_; }
  const Vec& parameters() const { return params_; }

  // in: inputs x batch. Returns outputs x batch.
  Matrix forward(const Matrix& in, Tape* tape = nullptr) const;
  // Accumulates dLoss/dparams into grad given dLoss/doutput.
  void backward(const Tape& tape, const Matrix& grad_out, Vec& grad) const;

private:
  MlpArchitecture arch_;
  Vec params_;
  std::vector<std::size_t> offsets_;
};

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
public:
  Adam() = default;
  Adam(std::size_t size, const AdamOptions& options);
  void step(Vec& params, const Vec& grad);
  long long steps() const { return t_; }

private:
  AdamOptions opt_;
  Vec m_, v_;
  long long t_ = 0;
};

}  // namespace wfrflow
