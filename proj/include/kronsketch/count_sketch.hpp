#pragma once

#include <vector>

#include "kronsketch/rng.hpp"
#include "kronsketch/types.hpp"

namespace kronsketch {

/// Count-sketch operator S in R^{m x n}: each column holds exactly one
/// nonzero, +-1 in a seeded pseudo-random row. Hashing is seeded 64-bit
/// mixing (an engineering substitution for 4-wise independent families).
/// Immutable after construction; application is pure.
class CountSketch {
 public:
  CountSketch(Index rows, Index cols, Seed seed)
      : m_(rows), n_(cols), seed_(seed) {
    require(rows >= 1 && cols >= 1, "count-sketch dims must be positive");
  }

  [[nodiscard]] Index rows() const { return m_; }
  [[nodiscard]] Index cols() const { return n_; }

  [[nodiscard]] Index bucket(Index j) const {
    return reduce_to(mix64(seed_.value ^ mix64(j + 1)), m_);
  }
  [[nodiscard]] double sign(Index j) const {
    return (mix64(seed_.stream ^ mix64(seed_.value + j + 0x51ed2701)) >> 63) ? 1.0 : -1.0;
  }

  [[nodiscard]] Vector apply(const Vector& x) const;
  [[nodiscard]] Matrix apply_to_rows(const Matrix& a) const;  // S * A, dense A
  [[nodiscard]] Matrix apply_to_rows(const SparseRowMatrix& a) const;

 private:
  Index m_, n_;
  Seed seed_;
};

/// Heavy-hitter structure: Theta(log n) dyadic levels, each holding
/// Theta(log n) independent count-sketch repetitions whose bucket hash
/// collapses indices sharing the level's most-significant-bit prefix.
/// Querying walks the prefix tree, expanding nodes whose estimated mass
/// clears the threshold, and returns every coordinate j whose point
/// estimate passes |x_j| >= eps/2 * ||x||_2 (so true eps-heavy coordinates
/// survive with high probability); the candidate set is capped at
/// O(1/eps^2).
class DyadicHeavyHitter {
 public:
  struct State {
    // sketches[level][rep] is a bucket array; level L is the finest.
    std::vector<std::vector<Vector>> sketches;
    Index n = 0;
    [[nodiscard]] bool populated() const { return n > 0; }
  };

  /// The sketch is linear: cx * X + cy * Y for states of x and y is the
  /// state of cx * x + cy * y. Used to assemble states of implicit vectors
  /// from precomputed pieces.
  static State combine(const State& x, double cx, const State& y, double cy);

  DyadicHeavyHitter(Index n, double eps, Seed seed, int tail_exponent = 2);

  [[nodiscard]] Index sketch_size() const;

  /// Builds the sketch state of one vector x (offline use: exactly one x).
  [[nodiscard]] State sketch(const Vector& x) const;

  /// Candidate set Q containing every eps-heavy coordinate w.h.p.
  [[nodiscard]] std::vector<Index> query(const State& state) const;

  [[nodiscard]] double point_estimate(const State& state, Index j) const;

 private:
  [[nodiscard]] Index bucket_of(int level, int rep, Index prefix) const;
  [[nodiscard]] double sign_of(int rep, Index j) const;
  [[nodiscard]] double node_mass(const State& state, int level, Index prefix) const;

  Index n_;
  double eps_;
  Seed seed_;
  int levels_;       // prefix lengths 0..levels_, level levels_ is finest
  Index buckets_;    // per (level, rep)
  Index reps_;
  Index expand_budget_;
  Index candidate_cap_;
};

}  // namespace kronsketch
