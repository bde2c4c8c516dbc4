#include "fedpalm/losses.hpp"

#include <algorithm>
#include <cmath>

#include "fedpalm/array.hpp"
#include "fedpalm/errors.hpp"

namespace fedpalm {

void LossWeights::validate() const {
  if (w_ce < 0.0 || w_con < 0.0) throw ConfigError("loss weights must be non-negative");
}

void ContrastiveBatch::validate() const {
  if (templates.size() != labels.size()) throw BatchError("contrastive batch: label count mismatch");
  if (templates.size() < 2 || templates.size() % 2 != 0) {
    throw BatchError("contrastive batch: needs 2n entries");
  }
  if (!(tau > 0.0)) throw BatchError("contrastive batch: tau must be positive");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    bool has_positive = false;
    for (std::size_t p = 0; p < labels.size(); ++p) {
      if (p != i && labels[p] == labels[i]) {
        has_positive = true;
        break;
      }
    }
    if (!has_positive) throw BatchError("contrastive batch: anchor without positive");
  }
}

namespace {

// log sum_j exp(row[j]), max-subtracted.
double log_sum_exp(const double* row, std::size_t n) {
  double m = row[0];
  for (std::size_t j = 1; j < n; ++j) m = std::max(m, row[j]);
  double acc = 0.0;
  for (std::size_t j = 0; j < n; ++j) acc += std::exp(row[j] - m);
  return m + std::log(acc);
}

}  // namespace

double cross_entropy(const std::vector<double>& logits, std::size_t classes,
                     const std::vector<int>& labels) {
  if (classes == 0 || labels.empty()) throw BatchError("cross_entropy: empty batch");
  if (logits.size() != classes * labels.size()) throw DimensionError("cross_entropy: logit shape");
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) throw LabelError("cross_entropy: label out of range");
    const double* row = logits.data() + i * classes;
    total += log_sum_exp(row, classes) - row[y];
  }
  return total / static_cast<double>(labels.size());
}

std::vector<double> cross_entropy_grad(const std::vector<double>& logits, std::size_t classes,
                                       const std::vector<int>& labels) {
  if (logits.size() != classes * labels.size()) throw DimensionError("cross_entropy_grad: logit shape");
  const double inv_n = 1.0 / static_cast<double>(labels.size());
  std::vector<double> grad(logits.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) throw LabelError("cross_entropy_grad: label out of range");
    const double* row = logits.data() + i * classes;
    double m = row[0];
    for (std::size_t j = 1; j < classes; ++j) m = std::max(m, row[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < classes; ++j) denom += std::exp(row[j] - m);
    for (std::size_t j = 0; j < classes; ++j) {
      const double soft = std::exp(row[j] - m) / denom;
      grad[i * classes + j] = (soft - (static_cast<std::size_t>(y) == j ? 1.0 : 0.0)) * inv_n;
    }
  }
  return grad;
}

double sup_contrastive(const ContrastiveBatch& batch) {
  batch.validate();
  const std::size_t n = batch.templates.size();
  double loss = 0.0;
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Similarities of anchor i against A(i) = batch \ {i}.
    std::size_t m = 0;
    double smax = -1e300;
    for (std::size_t a = 0; a < n; ++a) {
      if (a == i) continue;
      s[m] = dot(batch.templates[i], batch.templates[a]) / batch.tau;
      smax = std::max(smax, s[m]);
      ++m;
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < m; ++j) denom += std::exp(s[j] - smax);
    const double lse = smax + std::log(denom);

    double inner = 0.0;
    std::size_t positives = 0;
    std::size_t j = 0;
    for (std::size_t a = 0; a < n; ++a) {
      if (a == i) continue;
      if (batch.labels[a] == batch.labels[i]) {
        inner += s[j] - lse;
        ++positives;
      }
      ++j;
    }
    loss -= inner / static_cast<double>(positives);
  }
  ensure_finite(std::vector<double>{loss}, "sup_contrastive");
  return loss;
}

std::vector<std::vector<double>> sup_contrastive_grad(const ContrastiveBatch& batch) {
  batch.validate();
  const std::size_t n = batch.templates.size();
  const std::size_t d = batch.templates.front().size();
  std::vector<std::vector<double>> grad(n, std::vector<double>(d, 0.0));
  const double inv_tau = 1.0 / batch.tau;

  std::vector<double> s(n), soft(n);
  for (std::size_t i = 0; i < n; ++i) {
    double smax = -1e300;
    for (std::size_t a = 0; a < n; ++a) {
      if (a == i) continue;
      s[a] = dot(batch.templates[i], batch.templates[a]) * inv_tau;
      smax = std::max(smax, s[a]);
    }
    double denom = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      if (a == i) continue;
      soft[a] = std::exp(s[a] - smax);
      denom += soft[a];
    }
    std::size_t positives = 0;
    for (std::size_t a = 0; a < n; ++a) {
      if (a != i && batch.labels[a] == batch.labels[i]) ++positives;
    }
    const double inv_p = 1.0 / static_cast<double>(positives);

    // dL_i/ds_ia = softmax_ia - [a in P(i)] / |P(i)|; chain into both ends.
    for (std::size_t a = 0; a < n; ++a) {
      if (a == i) continue;
      double coeff = soft[a] / denom;
      if (batch.labels[a] == batch.labels[i]) coeff -= inv_p;
      if (coeff == 0.0) continue;
      const double c = coeff * inv_tau;
      for (std::size_t x = 0; x < d; ++x) {
        grad[i][x] += c * batch.templates[a][x];
        grad[a][x] += c * batch.templates[i][x];
      }
    }
  }
  return grad;
}

double hybrid_loss(double ce, double con, const LossWeights& w) {
  return w.w_ce * ce + w.w_con * con;
}

}  // namespace fedpalm
