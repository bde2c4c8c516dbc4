#pragma once

#include <cstddef>
#include <vector>

namespace fedpalm {

struct LossWeights {
  double w_ce = 0.8;
  double w_con = 0.2;
  void validate() const;
};

// Batch of 2n unit-norm templates (n originals interleaved with their
// augmented twins) and their identity labels. Construction guarantees
// every anchor has at least one positive.
struct ContrastiveBatch {
  std::vector<std::vector<double>> templates;
  std::vector<int> labels;
  double tau = 0.07;
  void validate() const;
};

// Mean negative log-softmax over the batch, log-sum-exp stabilized.
// logits is row-major [n x classes]; labels must lie in [0, classes).
double cross_entropy(const std::vector<double>& logits, std::size_t classes,
                     const std::vector<int>& labels);

// dL/d(logits), same layout: (softmax - onehot) / n.
std::vector<double> cross_entropy_grad(const std::vector<double>& logits, std::size_t classes,
                                       const std::vector<int>& labels);

// -sum_i 1/|P(i)| sum_{p in P(i)} log( exp(z_i.z_p / tau) /
//                                      sum_{a in A(i)} exp(z_i.z_a / tau) )
double sup_contrastive(const ContrastiveBatch& batch);

// dL/dz_j for every template in the batch.
std::vector<std::vector<double>> sup_contrastive_grad(const ContrastiveBatch& batch);

double hybrid_loss(double ce, double con, const LossWeights& w);

}  // namespace fedpalm
