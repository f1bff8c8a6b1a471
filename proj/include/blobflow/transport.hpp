#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "blobflow/error.hpp"

namespace blobflow {

struct TransportEntry {
  std::size_t source;
  std::size_t target;
  double mass;
};

struct TransportResult {
  double cost = 0.0;
  std::vector<TransportEntry> plan;
  std::size_t iterations = 0;
  /// Most negative reduced cost over all arcs after termination, relative to
  /// the largest arc cost. Nonnegative (up to rounding) certifies optimality.
  double min_reduced_cost = 0.0;
};

/// Primal network simplex for the balanced transportation problem
///   min sum_ij c(i, j) f_ij  s.t.  sum_j f_ij = a_i, sum_i f_ij = b_j, f >= 0
/// on the complete bipartite graph. Arcs are implicit: arc e joins source
/// e / n1 to target e % n1 and its cost is queried from the cost functor.
/// Spanning-tree bookkeeping (thread / successor lists, block-search pricing,
/// strongly feasible leaving-arc rule) follows the classical primal method.
///
/// Not reentrant: one instance per concurrent solve.
template <typename Cost>
class TransportSimplex {
 public:
  using Node = std::int64_t;
  using Arc = std::int64_t;

  static constexpr std::size_t kMaxArcs = std::size_t{1} << 33;

  explicit TransportSimplex(Cost cost) : cost_fn_(std::move(cost)) {}

  TransportResult solve(const std::vector<double>& supply, const std::vector<double>& demand,
                        std::size_t max_iterations = 100'000'000) {
    n0_ = static_cast<Node>(supply.size());
    n1_ = static_cast<Node>(demand.size());
    if (n0_ == 0 || n1_ == 0) throw ConfigError("transport", "both measures need at least one atom");
    if (static_cast<std::size_t>(n0_) * static_cast<std::size_t>(n1_) > kMaxArcs)
      throw ConfigError("transport", "problem too large for the dense transport solver");
    node_num_ = n0_ + n1_;
    arc_num_ = n0_ * n1_;

    double total_a = 0.0, total_b = 0.0, max_w = 0.0;
    for (double w : supply) {
      if (!(w >= 0.0)) throw ConfigError("transport", "weights must be nonnegative");
      total_a += w;
      max_w = std::max(max_w, w);
    }
    for (double w : demand) {
      if (!(w >= 0.0)) throw ConfigError("transport", "weights must be nonnegative");
      total_b += w;
      max_w = std::max(max_w, w);
    }
    if (std::abs(total_a - total_b) > 1e-9 * std::max(total_a, total_b))
      throw ConfigError("transport", "infeasible: total masses differ");
    mass_tol_ = 1e-12 * std::max(total_a, total_b);

    init(supply, demand);
    if (!initial_pivots()) throw NumericalError("transport: unbounded pivot");
    TransportResult out;
    while (find_entering_arc()) {
      if (out.iterations++ >= max_iterations) throw NumericalError("transport: iteration limit reached");
      find_join_node();
      if (!find_leaving_arc()) throw NumericalError("transport: unbounded pivot");
      change_flow();
      update_tree_structure();
      update_potential();
    }
    // Artificial arcs must be empty.
    for (Node u = 0; u < node_num_; ++u)
      if (pred_[u] >= arc_num_ && std::abs(pred_flow_[u]) > 1e-9 * std::max(total_a, 1e-300))
        throw NumericalError("transport: infeasible (artificial flow remains)");

    double max_cost = 0.0;
    for (Node u = 0; u < node_num_; ++u) {
      const Arc e = pred_[u];
      if (e < 0 || e >= arc_num_) continue;
      const double f = pred_flow_[u];
      if (f <= 0.0) continue;
      const Node i = e / n1_, j = e % n1_;
      const double c = cost_(i, j);
      out.cost += f * c;
      out.plan.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), f});
    }
    std::sort(out.plan.begin(), out.plan.end(), [](const auto& a, const auto& b) {
      return a.source != b.source ? a.source < b.source : a.target < b.target;
    });
    double min_rc = 0.0;
    for (Node i = 0; i < n0_; ++i)
      for (Node j = 0; j < n1_; ++j) {
        const double c = cost_(i, j);
        max_cost = std::max(max_cost, std::abs(c));
        min_rc = std::min(min_rc, c + pi_[i] - pi_[n0_ + j]);
      }
    out.min_reduced_cost = max_cost > 0.0 ? min_rc / max_cost : min_rc;
    return out;
  }

 private:
  enum : signed char { kTree = 0, kLower = 1 };

  Cost cost_fn_;

  double cost_(Node i, Node j) const {
    return static_cast<double>(cost_fn_(static_cast<std::size_t>(i), static_cast<std::size_t>(j)));
  }
  Node n0_ = 0, n1_ = 0, node_num_ = 0;
  Arc arc_num_ = 0;
  double mass_tol_ = 0.0;
  double art_cost_ = 0.0;

  std::vector<double> supply_, pi_, pred_flow_;
  std::vector<Node> parent_, thread_, rev_thread_, succ_num_, last_succ_, dirty_revs_;
  std::vector<Arc> pred_;
  std::vector<char> forward_;
  std::vector<signed char> state_;

  Arc next_arc_ = 0;
  Arc block_size_ = 0;

  Arc in_arc_ = -1;
  Node join_ = 0, u_in_ = 0, v_in_ = 0, u_out_ = 0, v_out_ = 0;
  double delta_ = 0.0;

  Node arc_source(Arc e) const {
    if (e < arc_num_) return e / n1_;
    const Node u = e - arc_num_;
    return supply_[u] >= 0.0 ? u : node_num_;
  }
  Node arc_target(Arc e) const {
    if (e < arc_num_) return n0_ + e % n1_;
    const Node u = e - arc_num_;
    return supply_[u] >= 0.0 ? node_num_ : u;
  }
  double arc_cost(Arc e) const {
    if (e < arc_num_) return cost_(e / n1_, e % n1_);
    return supply_[e - arc_num_] >= 0.0 ? 0.0 : art_cost_;
  }
  signed char arc_state(Arc e) const { return state_[e]; }

  void init(const std::vector<double>& a, const std::vector<double>& b) {
    const Node all = node_num_ + 1;
    supply_.assign(all, 0.0);
    pi_.assign(all, 0.0);
    pred_flow_.assign(all, 0.0);
    parent_.assign(all, -1);
    thread_.assign(all, 0);
    rev_thread_.assign(all, 0);
    succ_num_.assign(all, 0);
    last_succ_.assign(all, 0);
    pred_.assign(all, -1);
    forward_.assign(all, 0);
    state_.assign(static_cast<std::size_t>(arc_num_ + node_num_), kLower);

    for (Node i = 0; i < n0_; ++i) supply_[i] = a[i];
    for (Node j = 0; j < n1_; ++j) supply_[n0_ + j] = -b[j];

    double max_cost = 0.0;
    for (Node i = 0; i < n0_; ++i)
      for (Node j = 0; j < n1_; ++j) max_cost = std::max(max_cost, cost_(i, j));
    art_cost_ = (max_cost + 1.0) * static_cast<double>(node_num_);

    const Node root = node_num_;
    parent_[root] = -1;
    pred_[root] = -1;
    thread_[root] = 0;
    rev_thread_[0] = root;
    succ_num_[root] = node_num_ + 1;
    last_succ_[root] = root - 1;
    pi_[root] = 0.0;

    for (Node u = 0; u < node_num_; ++u) {
      const Arc e = arc_num_ + u;
      parent_[u] = root;
      pred_[u] = e;
      thread_[u] = u + 1;
      rev_thread_[u + 1] = u;
      succ_num_[u] = 1;
      last_succ_[u] = u;
      state_[e] = kTree;
      if (supply_[u] >= 0.0) {
        forward_[u] = 1;
        pi_[u] = 0.0;
        pred_flow_[u] = supply_[u];
      } else {
        forward_[u] = 0;
        pi_[u] = art_cost_;
        pred_flow_[u] = -supply_[u];
      }
    }
    next_arc_ = 0;
    block_size_ = std::max<Arc>(static_cast<Arc>(std::sqrt(static_cast<double>(arc_num_))), 10);
  }

  double reduced_cost(Arc e) const {
    return arc_state(e) * (arc_cost(e) + pi_[arc_source(e)] - pi_[arc_target(e)]);
  }

  bool negative_enough(double min) const {
    const double a = std::max({std::abs(pi_[arc_source(in_arc_)]), std::abs(pi_[arc_target(in_arc_)]),
                               std::abs(arc_cost(in_arc_))});
    return min < -std::numeric_limits<double>::epsilon() * 64.0 * a;
  }

  bool find_entering_arc() {
    double min = 0.0;
    Arc e = next_arc_;
    Arc cnt = block_size_;
    for (Arc k = 0; k < arc_num_; ++k, ++e) {
      if (e == arc_num_) e = 0;
      if (state_[e] == kLower) {
        const Node i = e / n1_, j = e % n1_;
        const double c = cost_(i, j) + pi_[i] - pi_[n0_ + j];
        if (c < min) {
          min = c;
          in_arc_ = e;
        }
      }
      if (--cnt == 0) {
        if (min < 0.0 && negative_enough(min)) {
          next_arc_ = e;
          return true;
        }
        cnt = block_size_;
      }
    }
    if (min < 0.0 && negative_enough(min)) {
      next_arc_ = e;
      return true;
    }
    return false;
  }

  bool initial_pivots() {
    std::vector<Arc> arc_mins;
    arc_mins.reserve(static_cast<std::size_t>(n1_));
    for (Node j = 0; j < n1_; ++j) {
      double best = std::numeric_limits<double>::max();
      Arc best_arc = -1;
      for (Node i = 0; i < n0_; ++i) {
        const double c = cost_(i, j);
        if (c < best) {
          best = c;
          best_arc = i * n1_ + j;
        }
      }
      if (best_arc >= 0) arc_mins.push_back(best_arc);
    }
    for (Arc a : arc_mins) {
      in_arc_ = a;
      if (reduced_cost(in_arc_) >= 0.0) continue;
      find_join_node();
      if (!find_leaving_arc()) return false;
      change_flow();
      update_tree_structure();
      update_potential();
    }
    return true;
  }

  void find_join_node() {
    Node u = arc_source(in_arc_), v = arc_target(in_arc_);
    while (u != v) {
      if (succ_num_[u] < succ_num_[v])
        u = parent_[u];
      else
        v = parent_[v];
    }
    join_ = u;
  }

  bool find_leaving_arc() {
    const Node first = arc_source(in_arc_);
    const Node second = arc_target(in_arc_);
    const double inf = std::numeric_limits<double>::infinity();
    delta_ = inf;
    int result = 0;
    for (Node u = first; u != join_; u = parent_[u]) {
      const double d = forward_[u] ? pred_flow_[u] : inf;
      if (d < delta_) {
        delta_ = d;
        u_out_ = u;
        result = 1;
      }
    }
    for (Node u = second; u != join_; u = parent_[u]) {
      const double d = forward_[u] ? inf : pred_flow_[u];
      if (d <= delta_) {
        delta_ = d;
        u_out_ = u;
        result = 2;
      }
    }
    if (result == 1) {
      u_in_ = first;
      v_in_ = second;
    } else {
      u_in_ = second;
      v_in_ = first;
    }
    return result != 0;
  }

  void change_flow() {
    if (delta_ > 0.0) {
      const double val = delta_;
      for (Node u = arc_source(in_arc_); u != join_; u = parent_[u]) pred_flow_[u] += forward_[u] ? -val : val;
      for (Node u = arc_target(in_arc_); u != join_; u = parent_[u]) pred_flow_[u] += forward_[u] ? val : -val;
    }
    state_[in_arc_] = kTree;
    state_[pred_[u_out_]] = kLower;
    pred_flow_[u_out_] = 0.0;
  }

  void update_tree_structure() {
    Node w;
    Node u = last_succ_[u_in_];
    const Node old_rev_thread = rev_thread_[u_out_];
    const Node old_succ_num = succ_num_[u_out_];
    const Node old_last_succ = last_succ_[u_out_];
    v_out_ = parent_[u_out_];
    Node right = thread_[u];
    Node last;

    if (old_rev_thread == v_in_)
      last = thread_[last_succ_[u_out_]];
    else
      last = thread_[v_in_];

    Node stem = u_in_;
    thread_[v_in_] = stem;
    dirty_revs_.clear();
    dirty_revs_.push_back(v_in_);
    Node par_stem = v_in_;
    while (stem != u_out_) {
      const Node new_stem = parent_[stem];
      thread_[u] = new_stem;
      dirty_revs_.push_back(u);

      w = rev_thread_[stem];
      thread_[w] = right;
      rev_thread_[right] = w;

      parent_[stem] = par_stem;
      par_stem = stem;
      stem = new_stem;

      u = last_succ_[stem] == last_succ_[par_stem] ? rev_thread_[par_stem] : last_succ_[stem];
      right = thread_[u];
    }
    parent_[u_out_] = par_stem;
    thread_[u] = last;
    rev_thread_[last] = u;
    last_succ_[u_out_] = u;

    if (old_rev_thread != v_in_) {
      thread_[old_rev_thread] = right;
      rev_thread_[right] = old_rev_thread;
    }
    for (Node d : dirty_revs_) rev_thread_[thread_[d]] = d;

    Node tmp_sc = 0;
    const Node tmp_ls = last_succ_[u_out_];
    u = u_out_;
    while (u != u_in_) {
      w = parent_[u];
      pred_[u] = pred_[w];
      pred_flow_[u] = pred_flow_[w];
      forward_[u] = !forward_[w];
      tmp_sc += succ_num_[u] - succ_num_[w];
      succ_num_[u] = tmp_sc;
      last_succ_[w] = tmp_ls;
      u = w;
    }
    pred_[u_in_] = in_arc_;
    pred_flow_[u_in_] = delta_;
    forward_[u_in_] = (u_in_ == arc_source(in_arc_));
    succ_num_[u_in_] = old_succ_num;

    Node up_limit_in = -1, up_limit_out = -1;
    if (last_succ_[join_] == v_in_)
      up_limit_out = join_;
    else
      up_limit_in = join_;

    for (u = v_in_; u != up_limit_in && last_succ_[u] == v_in_; u = parent_[u]) last_succ_[u] = last_succ_[u_out_];

    if (join_ != old_rev_thread && v_in_ != old_rev_thread) {
      for (u = v_out_; u != up_limit_out && last_succ_[u] == old_last_succ; u = parent_[u])
        last_succ_[u] = old_rev_thread;
    } else {
      for (u = v_out_; u != up_limit_out && last_succ_[u] == old_last_succ; u = parent_[u])
        last_succ_[u] = last_succ_[u_out_];
    }

    for (u = v_in_; u != join_; u = parent_[u]) succ_num_[u] += old_succ_num;
    for (u = v_out_; u != join_; u = parent_[u]) succ_num_[u] -= old_succ_num;
  }

  void update_potential() {
    const double c = arc_cost(pred_[u_in_]);
    const double sigma = forward_[u_in_] ? pi_[v_in_] - pi_[u_in_] - c : pi_[v_in_] - pi_[u_in_] + c;
    const Node end = thread_[last_succ_[u_in_]];
    for (Node u = u_in_; u != end; u = thread_[u]) pi_[u] += sigma;
  }
};

/// Solves the balanced transportation problem with cost(i, j) between
/// supply atom i and demand atom j.
template <typename Cost>
TransportResult solve_transport(const std::vector<double>& supply, const std::vector<double>& demand, Cost cost) {
  TransportSimplex<Cost> solver(std::move(cost));
  return solver.solve(supply, demand);
}

}  // namespace blobflow
