#pragma once

// Coupling and trajectory evaluation: relative OET objective gap against a
// ground-truth pairing, argmax assignment accuracy at three label levels,
// exact 1-Wasserstein distance and relative mass error.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "wfrflow/cufm.hpp"
#include "wfrflow/hierarchy.hpp"
#include "wfrflow/oet.hpp"

namespace wfrflow {

// Unit mass on (i, truth[i]).
SparseCoupling truth_coupling(const std::vector<Index>& truth, Index cols);

// (obj(gamma) - obj(truth)) / scale, scale = obj(truth) if nonzero else
// sum(w0) + sum(w1). Costs must cover the support of both couplings.
double objective_gap(const SparseCoupling& gamma, const SparseCoupling& truth, const CostMatrix& cost, const Vec& w0,
                     const Vec& w1);
// Same, with WFR costs computed on the union of both supports.
double objective_gap(const SparseCoupling& gamma, const SparseCoupling& truth, const DiscreteMeasure& source,
                     const DiscreteMeasure& target, double delta, int threads = 1);

struct AccuracyReport {
  double point = 0.0;
  double micro = 0.0;
  double macro = 0.0;
};

// Row argmax with ties to the smallest column; zero rows count as wrong.
// Labels are per target point; fractions are weighted by source mass.
AccuracyReport assignment_accuracy(const SparseCoupling& gamma, const std::vector<Index>& truth,
                                   const std::vector<std::string>& micro_labels,
                                   const std::vector<std::string>& macro_labels, const Vec& source_weights);

struct W1Options {
  Index max_support = 512;
  std::uint64_t seed = 0;
};

struct W1Result {
  double distance = 0.0;
  bool subsampled = false;
  std::uint64_t seed = 0;
};

// Exact W1 between the probability-normalized measures. Sides larger than
// max_support are replaced by a weighted sample without replacement carrying
// equal weights.
W1Result w1_distance(const DiscreteMeasure& a, const DiscreteMeasure& b, const W1Options& options = {});

double relative_mass_error(const SimulatedPopulation& predicted, const DiscreteMeasure& target);

struct CouplingReport {
  double objective_gap = 0.0;
  AccuracyReport accuracy;
  double wall_time_seconds = 0.0;
};

// key = value lines; the gap is printed as a percentage.
void write_report(std::ostream& out, const CouplingReport& report);
// Appends one CSV row, writing the header when the file is new or empty.
void append_report_row(const std::string& path, const std::string& label, const CouplingReport& report);

}  // namespace wfrflow
