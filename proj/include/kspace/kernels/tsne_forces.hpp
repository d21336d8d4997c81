#pragma once

// Barnes-Hut force evaluation for 2-D t-SNE.

#include "kspace/types.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace kspace::kernels {

/// Symmetric joint probabilities in CSR form.
struct SparseAffinities {
  std::vector<std::int64_t> row_ptr;
  std::vector<std::int64_t> cols;
  std::vector<double> vals;

  std::int64_t rows() const { return static_cast<std::int64_t>(row_ptr.size()) - 1; }
};

/// Region quadtree over 2-D points. Leaves hold one point, or several exactly
/// coincident points.
class QuadTree {
 public:
  explicit QuadTree(const Matrix& y);

  struct Node {
    double cx = 0, cy = 0;  // cell center
    double half = 0;        // half side length
    double com_x = 0, com_y = 0;
    std::int64_t size = 0;
    std::int32_t first_child = -1;  // index of 4 consecutive children, -1 for leaf
    std::vector<std::int64_t> points;  // leaf members
  };

  const std::vector<Node>& nodes() const { return nodes_; }

 private:
  void insert(std::int32_t node, std::int64_t index, int depth);
  void subdivide(std::int32_t node);
  int quadrant(const Node& n, double x, double y) const;

  const Matrix& y_;
  std::vector<Node> nodes_;
};

/// Σ_j q_ij Z (y_i - y_j) per point with the Barnes-Hut approximation, where
/// q_ij Z = (1 + ||y_i - y_j||²)^-1. Also writes Σ_j q_ij Z per point.
/// `theta` = 0 gives the exact sums.
void repulsive_forces(const QuadTree& tree, const Matrix& y, double theta, Matrix& forces,
                      std::vector<double>& z_parts);

/// Σ_j p_ij (1 + ||y_i - y_j||²)^-1 (y_i - y_j), scaled by `exaggeration`.
void attractive_forces(const SparseAffinities& p, const Matrix& y, double exaggeration, Matrix& forces);

/// Normalization Z = Σ_{i≠j} (1 + ||y_i - y_j||²)^-1 from per-point parts,
/// summed serially in point order.
double sum_in_order(const std::vector<double>& parts);

}  // namespace kspace::kernels
