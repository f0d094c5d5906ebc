#include "chi2sets/norms.hpp"

#include <algorithm>
#include <cmath>

#include "chi2sets/error.hpp"

namespace chi2sets {

NormSpec NormSpec::group(std::vector<IndexSet> groups) {
  NormSpec spec;
  spec.kind = NormKind::Group;
  for (auto& g : groups) {
    if (g.empty()) throw InvalidInput("group norm: empty group");
    std::sort(g.begin(), g.end());
    if (std::adjacent_find(g.begin(), g.end()) != g.end()) {
      throw InvalidInput("group norm: repeated index inside a group");
    }
  }
  std::vector<Index> all;
  for (const auto& g : groups) all.insert(all.end(), g.begin(), g.end());
  std::sort(all.begin(), all.end());
  if (std::adjacent_find(all.begin(), all.end()) != all.end()) {
    throw InvalidInput("group norm: groups must be mutually disjoint");
  }
  spec.groups = std::move(groups);
  return spec;
}

NormSpec NormSpec::restricted_to(const IndexSet& keep) const {
  if (kind == NormKind::L1) return *this;
  NormSpec out;
  out.kind = NormKind::Group;
  for (const auto& g : groups) {
    IndexSet mapped;
    for (Index j : g) {
      auto it = std::lower_bound(keep.begin(), keep.end(), j);
      if (it != keep.end() && *it == j) mapped.push_back(static_cast<Index>(it - keep.begin()));
    }
    if (!mapped.empty()) out.groups.push_back(std::move(mapped));
  }
  return out;
}

double soft_threshold(double a, double eta) {
  const double mag = std::abs(a) - eta;
  if (mag <= 0.0) return 0.0;
  return a > 0.0 ? mag : -mag;
}

Vector block_soft_threshold(const Vector& a, double eta) {
  const double nrm = a.norm();
  if (nrm <= eta || nrm == 0.0) return Vector::Zero(a.size());
  return a * ((nrm - eta) / nrm);
}

double x_weighted_group_norm(const Matrix& x, const Vector& beta, const std::vector<IndexSet>& groups) {
  if (x.cols() != beta.size()) throw InvalidInput("x_weighted_group_norm: shape mismatch");
  double total = 0.0;
  for (const auto& g : groups) {
    check_index_set(g, x.cols(), "x_weighted_group_norm");
    Vector fitted = Vector::Zero(x.rows());
    for (Index j : g) fitted += x.col(j) * beta(j);
    total += std::sqrt(static_cast<double>(g.size())) * fitted.norm();
  }
  return total;
}

Penalty::Penalty(const NormSpec& spec, Index dim) : kind_(spec.kind), dim_(dim) {
  if (kind_ == NormKind::L1) return;
  std::vector<char> covered(static_cast<std::size_t>(dim), 0);
  for (const auto& g : spec.groups) {
    for (Index j : g) {
      if (j < 0 || j >= dim) throw InvalidInput("group norm: index out of range");
      covered[static_cast<std::size_t>(j)] = 1;
    }
    blocks_.push_back({g, std::sqrt(static_cast<double>(g.size()))});
  }
  for (Index j = 0; j < dim; ++j) {
    if (!covered[static_cast<std::size_t>(j)]) blocks_.push_back({{j}, 1.0});
  }
}

double Penalty::value(const Vector& a) const {
  if (kind_ == NormKind::L1) return a.lpNorm<1>();
  double total = 0.0;
  for (const auto& b : blocks_) {
    double sq = 0.0;
    for (Index j : b.idx) sq += a(j) * a(j);
    total += b.weight * std::sqrt(sq);
  }
  return total;
}

double Penalty::value(const Matrix& a) const {
  if (kind_ == NormKind::L1) return a.cwiseAbs().sum();
  double total = 0.0;
  for (Index c = 0; c < a.cols(); ++c) total += value(Vector(a.col(c)));
  return total;
}

double Penalty::dual(const Vector& z) const {
  if (kind_ == NormKind::L1) return z.cwiseAbs().maxCoeff();
  double worst = 0.0;
  for (const auto& b : blocks_) {
    double sq = 0.0;
    for (Index j : b.idx) sq += z(j) * z(j);
    worst = std::max(worst, std::sqrt(sq) / b.weight);
  }
  return worst;
}

double Penalty::dual(const Matrix& z) const {
  if (kind_ == NormKind::L1) return z.cwiseAbs().maxCoeff();
  double worst = 0.0;
  for (Index c = 0; c < z.cols(); ++c) worst = std::max(worst, dual(Vector(z.col(c))));
  return worst;
}

Matrix Penalty::prox(const Matrix& v, double eta) const {
  if (kind_ == NormKind::L1) {
    return v.unaryExpr([eta](double a) { return soft_threshold(a, eta); });
  }
  Matrix out(v.rows(), v.cols());
  for (Index c = 0; c < v.cols(); ++c) {
    for (const auto& b : blocks_) {
      Vector sub(static_cast<Index>(b.idx.size()));
      for (std::size_t k = 0; k < b.idx.size(); ++k) sub(static_cast<Index>(k)) = v(b.idx[k], c);
      const Vector shrunk = block_soft_threshold(sub, eta * b.weight);
      for (std::size_t k = 0; k < b.idx.size(); ++k) out(b.idx[k], c) = shrunk(static_cast<Index>(k));
    }
  }
  return out;
}

}  // namespace chi2sets
