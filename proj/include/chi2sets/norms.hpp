#pragma once

#include <vector>

#include "chi2sets/linalg.hpp"

namespace chi2sets {

enum class NormKind { L1, Group };

/// Penalty norm Ω applied column-wise to coefficient matrices.
/// Group kind: Ω(a) = Σ_t √|G_t| ‖a_{G_t}‖₂ over disjoint groups; coordinates
/// not named in any group are treated as singleton groups.
struct NormSpec {
  NormKind kind = NormKind::L1;
  std::vector<IndexSet> groups;

  static NormSpec l1() { return {}; }
  static NormSpec group(std::vector<IndexSet> groups);

  /// Same norm seen through a coordinate subset: index keep[k] becomes k.
  /// Coordinates outside keep are dropped from their groups.
  NormSpec restricted_to(const IndexSet& keep) const;
};

/// Scalar Φ̄: sign(a)·(|a| - eta)₊.
double soft_threshold(double a, double eta);

/// Block Φ̄: a/‖a‖₂·(‖a‖₂ - eta)₊, zero at a = 0.
Vector block_soft_threshold(const Vector& a, double eta);

/// Ω(β) = Σ_t √|G_t| ‖X β_{G_t}‖₂. Evaluation only; not a solver penalty.
double x_weighted_group_norm(const Matrix& x, const Vector& beta, const std::vector<IndexSet>& groups);

/// A NormSpec resolved against a coordinate dimension.
class Penalty {
 public:
  Penalty(const NormSpec& spec, Index dim);

  NormKind kind() const { return kind_; }
  Index dim() const { return dim_; }

  double value(const Vector& a) const;
  /// ‖A‖_{1,Ω} = Σ_j Ω(a_j).
  double value(const Matrix& a) const;
  double dual(const Vector& z) const;
  /// ‖Z‖_{∞,Ω*} = max_j Ω*(z_j).
  double dual(const Matrix& z) const;
  /// Proximal map of eta·‖·‖_{1,Ω}: entrywise Φ̄ for ℓ1, blockwise Φ̄ with
  /// threshold eta·√|G_t| for groups.
  Matrix prox(const Matrix& v, double eta) const;

  struct Block {
    IndexSet idx;
    double weight;
  };
  const std::vector<Block>& blocks() const { return blocks_; }

 private:
  NormKind kind_;
  Index dim_;
  std::vector<Block> blocks_;
};

}  // namespace chi2sets
