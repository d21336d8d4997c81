#include "kspace/kernels/tsne_forces.hpp"

#include "kspace/kernels/compensated.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace kspace::kernels {
namespace {

// Below this half-width further splitting cannot separate distinct doubles
// in any useful way; points are kept together in one leaf.
constexpr int kMaxDepth = 60;

}  // namespace

QuadTree::QuadTree(const Matrix& y) : y_(y) {
  const Eigen::Index n = y.rows();
  double min_x = std::numeric_limits<double>::infinity(), max_x = -min_x;
  double min_y = min_x, max_y = -min_x;
  for (Eigen::Index i = 0; i < n; ++i) {
    min_x = std::min(min_x, y(i, 0));
    max_x = std::max(max_x, y(i, 0));
    min_y = std::min(min_y, y(i, 1));
    max_y = std::max(max_y, y(i, 1));
  }
  Node root;
  if (n == 0) {
    nodes_.push_back(root);
    return;
  }
  root.cx = 0.5 * (min_x + max_x);
  root.cy = 0.5 * (min_y + max_y);
  root.half = 0.5 * std::max(max_x - min_x, max_y - min_y) + 1e-5;
  nodes_.reserve(static_cast<std::size_t>(4 * n + 1));
  nodes_.push_back(root);
  for (Eigen::Index i = 0; i < n; ++i) insert(0, i, 0);
}

int QuadTree::quadrant(const Node& n, double x, double y) const {
  return (x >= n.cx ? 1 : 0) + (y >= n.cy ? 2 : 0);
}

void QuadTree::subdivide(std::int32_t node) {
  const auto first = static_cast<std::int32_t>(nodes_.size());
  const double h = nodes_[node].half * 0.5;
  const double cx = nodes_[node].cx, cy = nodes_[node].cy;
  for (int q = 0; q < 4; ++q) {
    Node c;
    c.half = h;
    c.cx = cx + ((q & 1) ? h : -h);
    c.cy = cy + ((q & 2) ? h : -h);
    nodes_.push_back(std::move(c));
  }
  nodes_[node].first_child = first;
}

void QuadTree::insert(std::int32_t node, std::int64_t index, int depth) {
  const double px = y_(index, 0), py = y_(index, 1);
  while (true) {
    Node& n = nodes_[node];
    const double s = static_cast<double>(n.size);
    n.com_x = (n.com_x * s + px) / (s + 1.0);
    n.com_y = (n.com_y * s + py) / (s + 1.0);
    ++n.size;

    if (n.first_child < 0) {
      if (n.points.empty()) {
        n.points.push_back(index);
        return;
      }
      const std::int64_t other = n.points.front();
      const bool coincident = y_(other, 0) == px && y_(other, 1) == py;
      if (coincident || depth >= kMaxDepth) {
        n.points.push_back(index);
        return;
      }
      // Push existing members one level down, then continue with `index`.
      std::vector<std::int64_t> members = std::move(n.points);
      n.points.clear();
      subdivide(node);
      for (auto m : members) {
        Node& parent = nodes_[node];
        const int q = quadrant(parent, y_(m, 0), y_(m, 1));
        Node& child = nodes_[static_cast<std::size_t>(parent.first_child + q)];
        const double cs = static_cast<double>(child.size);
        child.com_x = (child.com_x * cs + y_(m, 0)) / (cs + 1.0);
        child.com_y = (child.com_y * cs + y_(m, 1)) / (cs + 1.0);
        ++child.size;
        child.points.push_back(m);
      }
    }
    const Node& parent = nodes_[node];
    node = parent.first_child + quadrant(parent, px, py);
    ++depth;
  }
}

void repulsive_forces(const QuadTree& tree, const Matrix& y, double theta, Matrix& forces,
                      std::vector<double>& z_parts) {
  const Eigen::Index n = y.rows();
  forces.setZero(n, 2);
  z_parts.assign(static_cast<std::size_t>(n), 0.0);
  const auto& nodes = tree.nodes();
  const double theta_sq = theta * theta;

#pragma omp parallel
  {
    std::vector<std::int32_t> stack;
#pragma omp for schedule(dynamic, 64)
    for (Eigen::Index i = 0; i < n; ++i) {
      const double xi = y(i, 0), yi = y(i, 1);
      double fx = 0.0, fy = 0.0, zsum = 0.0;
      stack.clear();
      stack.push_back(0);
      while (!stack.empty()) {
        const auto& node = nodes[static_cast<std::size_t>(stack.back())];
        stack.pop_back();
        if (node.size == 0) continue;
        if (node.first_child < 0) {
          for (auto j : node.points) {
            if (j == i) continue;
            const double dx = xi - y(j, 0), dy = yi - y(j, 1);
            const double q = 1.0 / (1.0 + dx * dx + dy * dy);
            zsum += q;
            fx += q * q * dx;
            fy += q * q * dy;
          }
          continue;
        }
        const double dx = xi - node.com_x, dy = yi - node.com_y;
        const double d2 = dx * dx + dy * dy;
        const double width = 2.0 * node.half;
        if (d2 > 0.0 && width * width < theta_sq * d2) {
          const double q = 1.0 / (1.0 + d2);
          const double m = static_cast<double>(node.size);
          zsum += m * q;
          fx += m * q * q * dx;
          fy += m * q * q * dy;
        } else {
          for (int c = 3; c >= 0; --c) stack.push_back(node.first_child + c);
        }
      }
      forces(i, 0) = fx;
      forces(i, 1) = fy;
      z_parts[static_cast<std::size_t>(i)] = zsum;
    }
  }
}

void attractive_forces(const SparseAffinities& p, const Matrix& y, double exaggeration, Matrix& forces) {
  const Eigen::Index n = y.rows();
  forces.setZero(n, 2);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    double fx = 0.0, fy = 0.0;
    for (auto e = p.row_ptr[i]; e < p.row_ptr[i + 1]; ++e) {
      const auto j = p.cols[static_cast<std::size_t>(e)];
      const double dx = y(i, 0) - y(j, 0), dy = y(i, 1) - y(j, 1);
      const double w = p.vals[static_cast<std::size_t>(e)] / (1.0 + dx * dx + dy * dy);
      fx += w * dx;
      fy += w * dy;
    }
    forces(i, 0) = exaggeration * fx;
    forces(i, 1) = exaggeration * fy;
  }
}

double sum_in_order(const std::vector<double>& parts) {
  CompensatedSum s;
  for (double v : parts) s.add(v);
  return s.value();
}

}  // namespace kspace::kernels
