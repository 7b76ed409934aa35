#include "fscplan/alergia.hpp"

#include <algorithm>
#include <cmath>

#include "fscplan/errors.hpp"

namespace fscplan {

double chi_squared_survival(double statistic, int df) {
  if (df < 1) throw Error("chi-squared needs at least one degree of freedom");
  if (statistic <= 0.0) return 1.0;
  double z = statistic / 2.0;
  // Walk Q(a, z) up from the half-integer or integer base case using
  // Q(a+1, z) = Q(a, z) + z^a e^-z / Gamma(a+1).
  double q, a, gamma_a1;
  if (df % 2 == 0) {
    q = std::exp(-z);
    a = 1.0;
    gamma_a1 = 1.0;  // Gamma(2)
  } else {
    q = std::erfc(std::sqrt(z));
    a = 0.5;
    gamma_a1 = std::sqrt(M_PI) * 0.5;  // Gamma(3/2)
  }
  double target = df / 2.0;
  while (a < target - 0.25) {
    q += std::exp(a * std::log(z) - z) / gamma_a1;
    a += 1.0;
    gamma_a1 *= a;
  }
  return std::min(1.0, std::max(0.0, q));
}

Chi2Table chi2_homogeneity(const std::vector<long>& counts1,
                           const std::vector<long>& counts2) {
  std::size_t k = std::max(counts1.size(), counts2.size());
  double n1 = 0.0, n2 = 0.0;
  for (long c : counts1) n1 += static_cast<double>(c);
  for (long c : counts2) n2 += static_cast<double>(c);
  double total = n1 + n2;
  Chi2Table out;
  if (total == 0.0 || n1 == 0.0 || n2 == 0.0) return out;
  int used = 0;
  for (std::size_t j = 0; j < k; ++j) {
    double c1 = j < counts1.size() ? static_cast<double>(counts1[j]) : 0.0;
    double c2 = j < counts2.size() ? static_cast<double>(counts2[j]) : 0.0;
    double col = c1 + c2;
    if (col == 0.0) continue;
    ++used;
    double e1 = n1 * col / total;
    double e2 = n2 * col / total;
    out.statistic += (c1 - e1) * (c1 - e1) / e1;
    out.statistic += (c2 - e2) * (c2 - e2) / e2;
  }
  out.df = used - 1;
  return out;
}

bool chi2_compatible(const ObsActionCounts& counts1,
                     const ObsActionCounts& counts2, double alpha,
                     long min_samples) {
  for (const auto& [z, row1] : counts1) {
    auto it = counts2.find(z);
    if (it == counts2.end()) continue;
    const std::vector<long>& row2 = it->second;
    long n1 = 0, n2 = 0;
    for (long c : row1) n1 += c;
    for (long c : row2) n2 += c;
    if (n1 < min_samples || n2 < min_samples) continue;
    Chi2Table table = chi2_homogeneity(row1, row2);
    if (table.df < 1) continue;
    if (chi_squared_survival(table.statistic, table.df) < alpha) return false;
  }
  return true;
}

long PrefixTree::total_count() const {
  long total = 0;
  for (const Node& node : nodes)
    for (const auto& [z, row] : node.counts)
      for (long c : row) total += c;
  return total;
}

PrefixTree build_prefix_tree(const TrajectoryDataset& data) {
  if (data.sequences.empty()) throw Error("dataset has no sequences");
  PrefixTree tree;
  tree.nodes.emplace_back();
  for (const auto& seq : data.sequences) {
    int cur = 0;
    for (const auto& [z, a] : seq) {
      PrefixTree::Node& node = tree.nodes[cur];
      auto [it, inserted] = node.counts.try_emplace(z);
      if (inserted) it->second.assign(data.num_actions, 0);
      ++it->second[a];
      auto child = node.children.find({z, a});
      if (child == node.children.end()) {
        int next = static_cast<int>(tree.nodes.size());
        int depth = node.depth + 1;
        node.children.emplace(std::make_pair(z, a), next);
        tree.nodes.emplace_back();
        tree.nodes.back().depth = depth;
        cur = next;
      } else {
        cur = child->second;
      }
    }
  }
  return tree;
}

namespace {

// Merge bookkeeping over the prefix tree: path-compressed representative
// lookup plus count/child folding.
class Merger {
 public:
  Merger(PrefixTree* tree, const AlergiaOptions& opts)
      : tree_(tree), parent_(tree->nodes.size()), opts_(opts) {
    for (std::size_t i = 0; i < parent_.size(); ++i)
      parent_[i] = static_cast<int>(i);
  }

  int find(int v) {
    while (parent_[v] != v) {
      parent_[v] = parent_[parent_[v]];
      v = parent_[v];
    }
    return v;
  }

  bool compatible(int red, int blue) {
    red = find(red);
    blue = find(blue);
    if (red == blue) return true;
    const PrefixTree::Node& rn = tree_->nodes[red];
    const PrefixTree::Node& bn = tree_->nodes[blue];
    if (!chi2_compatible(rn.counts, bn.counts, opts_.alpha, opts_.min_samples))
      return false;
    for (const auto& [key, bc] : bn.children) {
      auto it = rn.children.find(key);
      if (it == rn.children.end()) continue;
      if (!compatible(it->second, bc)) return false;
    }
    return true;
  }

  void fold(int red, int blue) {
    red = find(red);
    blue = find(blue);
    if (red == blue) return;
    parent_[blue] = red;
    PrefixTree::Node& rn = tree_->nodes[red];
    PrefixTree::Node& bn = tree_->nodes[blue];
    for (auto& [z, row] : bn.counts) {
      auto [it, inserted] = rn.counts.try_emplace(z, row.size(), 0);
      for (std::size_t a = 0; a < row.size(); ++a) it->second[a] += row[a];
    }
    // Move children over; shared edges fold recursively.
    auto children = std::move(bn.children);
    bn.children.clear();
    for (auto& [key, bc] : children) {
      auto it = rn.children.find(key);
      if (it == rn.children.end())
        rn.children.emplace(key, bc);
      else
        fold(it->second, bc);
    }
  }

 private:
  PrefixTree* tree_;
  std::vector<int> parent_;
  const AlergiaOptions& opts_;
};

}  // namespace

Fsc run_alergia(const TrajectoryDataset& data, const AlergiaOptions& opts) {
  PrefixTree tree = build_prefix_tree(data);
  Merger merger(&tree, opts);

  std::vector<int> red = {0};
  auto is_red = [&](int v) {
    return std::find(red.begin(), red.end(), v) != red.end();
  };
  while (true) {
    // Lowest blue by (depth, creation index); blues are children of reds.
    int blue = -1;
    for (int r : red)
      for (const auto& [key, child] : tree.nodes[r].children) {
        int c = merger.find(child);
        if (is_red(c)) continue;
        if (blue < 0 || tree.nodes[c].depth < tree.nodes[blue].depth ||
            (tree.nodes[c].depth == tree.nodes[blue].depth && c < blue))
          blue = c;
      }
    if (blue < 0) break;
    bool merged = false;
    for (int r : red) {
      if (merger.compatible(r, blue)) {
        merger.fold(r, blue);
        merged = true;
        break;
      }
    }
    if (!merged) red.push_back(blue);
  }

  // Frequency estimates over the merged machine.
  Fsc fsc;
  fsc.num_observations = data.num_observations;
  fsc.num_actions = data.num_actions;
  fsc.num_nodes = static_cast<int>(red.size());
  fsc.initial_node = 0;
  std::vector<int> id_of(tree.nodes.size(), -1);
  for (std::size_t i = 0; i < red.size(); ++i) id_of[red[i]] = static_cast<int>(i);
  fsc.sigma.assign(static_cast<std::size_t>(fsc.num_nodes) *
                       fsc.num_observations,
                   {});
  for (int r : red) {
    const PrefixTree::Node& node = tree.nodes[r];
    int n = id_of[r];
    for (const auto& [z, row] : node.counts) {
      long total = 0;
      for (long c : row) total += c;
      if (total == 0) continue;
      JointDist& joint = fsc.sigma[fsc.row(n, z)];
      for (std::size_t a = 0; a < row.size(); ++a) {
        if (row[a] == 0) continue;
        auto it = node.children.find({z, static_cast<int>(a)});
        int succ = it == node.children.end() ? r : merger.find(it->second);
        int succ_id = id_of[succ];
        if (succ_id < 0) {
          // Successor never promoted (dangling leaf); fall back to restart.
          succ_id = 0;
        }
        joint.nodes.push_back(succ_id);
        joint.actions.push_back(static_cast<int>(a));
        joint.probs.push_back(static_cast<double>(row[a]) /
                              static_cast<double>(total));
      }
    }
  }
  validate(fsc);
  return fsc;
}

}  // namespace fscplan
