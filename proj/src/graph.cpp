#include "stpgn/graph.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "stpgn/tape.hpp"

namespace stpgn::graph {

namespace {

std::string join_indices(const std::vector<std::size_t>& ids) {
  std::ostringstream os;
  for (std::size_t i = 0; i < ids.size(); ++i) os << (i ? ", " : "") << ids[i];
  return os.str();
}

std::size_t index_of(const std::vector<std::string>& names, const std::string& name) {
  return static_cast<std::size_t>(std::find(names.begin(), names.end(), name) - names.begin());
}

}  // namespace

void SkeletonTopology::validate() const {
  if (joint_count == 0) throw GraphError("skeleton has no joints");
  if (center_joint >= joint_count)
    throw GraphError("center joint " + std::to_string(center_joint) + " outside [0, " + std::to_string(joint_count) +
                     ")");
  if (!joint_names.empty() && joint_names.size() != joint_count)
    throw GraphError("joint name count " + std::to_string(joint_names.size()) + " != joint count " +
                     std::to_string(joint_count));
  for (const auto& [a, b] : edges) {
    if (a >= joint_count || b >= joint_count)
      throw GraphError("edge (" + std::to_string(a) + ", " + std::to_string(b) + ") references a joint outside [0, " +
                       std::to_string(joint_count) + ")");
    if (a == b) throw GraphError("self-loop edge on joint " + std::to_string(a));
  }
  const auto hops = hop_distances(*this);
  std::vector<std::size_t> unreachable;
  for (std::size_t i = 0; i < hops.size(); ++i)
    if (hops[i] < 0) unreachable.push_back(i);
  if (!unreachable.empty())
    throw GraphError("skeleton graph is disconnected; unreachable joints: " + join_indices(unreachable));
}

SkeletonTopology default_skeleton() {
  SkeletonTopology t;
  t.joint_count = 13;
  t.joint_names = {"right_ankle", "left_ankle",  "right_knee",     "left_knee",     "right_hip",
                   "left_hip",    "right_wrist", "left_wrist",     "right_elbow",   "left_elbow",
                   "right_shoulder", "left_shoulder", "head"};
  t.edges = {{0, 2}, {2, 4}, {1, 3}, {3, 5}, {4, 5},  {4, 10},  {5, 11},
             {6, 8}, {8, 10}, {7, 9}, {9, 11}, {10, 11}, {10, 12}, {11, 12}};
  t.center_joint = 12;
  return t;
}

Tensor adjacency_matrix(const SkeletonTopology& topology) {
  Tensor a = Tensor::matrix(topology.joint_count, topology.joint_count);
  for (const auto& [i, j] : topology.edges) {
    a(i, j) = 1.0;
    a(j, i) = 1.0;
  }
  return a;
}

std::vector<int> hop_distances(const SkeletonTopology& topology) {
  const std::size_t n = topology.joint_count;
  std::vector<std::vector<std::size_t>> nbrs(n);
  for (const auto& [i, j] : topology.edges) {
    if (i >= n || j >= n) continue;
    nbrs[i].push_back(j);
    nbrs[j].push_back(i);
  }
  std::vector<int> dist(n, -1);
  if (topology.center_joint >= n) return dist;
  std::deque<std::size_t> queue{topology.center_joint};
  dist[topology.center_joint] = 0;
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    for (std::size_t v : nbrs[u])
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
  }
  return dist;
}

Tensor normalize_adjacency(const Tensor& a) {
  Tape tape;
  tape.set_check_finite(false);
  return ops::normalize_adjacency(tape.constant(a)).value();
}

Tensor PartitionedAdjacency::sum() const {
  Tensor s = Tensor::matrix(node_count(), node_count());
  for (const auto& p : partitions)
    for (std::size_t i = 0; i < s.size(); ++i) s[i] += p[i];
  return s;
}

PartitionedAdjacency spatial_partition(const SkeletonTopology& topology) {
  topology.validate();
  const std::size_t n = topology.joint_count;
  const auto hops = hop_distances(topology);
  const Tensor a = adjacency_matrix(topology);
  PartitionedAdjacency out;
  out.partitions.assign(3, Tensor::matrix(n, n));
  for (std::size_t i = 0; i < n; ++i) {
    out.partitions[0](i, i) = 1.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (a(i, j) == 0.0) continue;
      if (hops[j] < hops[i]) out.partitions[1](i, j) = a(i, j);
      else if (hops[j] > hops[i]) out.partitions[2](i, j) = a(i, j);
      else out.partitions[0](i, j) = a(i, j);
    }
  }
  for (const auto& p : out.partitions) out.normalized.push_back(normalize_adjacency(p));
  return out;
}

PartitionedAdjacency fully_connected(std::size_t nodes) {
  PartitionedAdjacency out;
  out.partitions.push_back(Tensor::matrix(nodes, nodes, 1.0));
  out.normalized.push_back(normalize_adjacency(out.partitions.back()));
  return out;
}

EdgeImportance EdgeImportance::ones_like(const PartitionedAdjacency& adjacency) {
  EdgeImportance e;
  for (const auto& p : adjacency.partitions) e.masks.emplace_back(p.shape(), 1.0);
  return e;
}

Tensor apply_edge_importance(const Tensor& partition, const Tensor& mask) {
  require_same_shape(partition, mask, "apply_edge_importance");
  Tensor out(partition.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = partition[i] * mask[i];
  return out;
}

// ------------------------------------------------------------------ parts

PartSpec parse_part_spec(const std::string& text, std::size_t joint_count) {
  PartSpec spec;
  spec.joint_part.assign(joint_count, "");
  std::map<std::size_t, std::vector<std::string>> joint_assignments;
  std::map<std::string, std::string> part_global;
  std::vector<std::string> bad_lines;

  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    std::string a, b, extra;
    if (!(ls >> a >> b) || (ls >> extra) || (key != "joint" && key != "part")) {
      bad_lines.push_back(std::to_string(lineno));
      continue;
    }
    if (key == "joint") {
      std::size_t idx = 0;
      try {
        std::size_t used = 0;
        idx = std::stoul(a, &used);
        if (used != a.size()) throw std::invalid_argument(a);
      } catch (const std::exception&) {
        bad_lines.push_back(std::to_string(lineno));
        continue;
      }
      if (idx >= joint_count)
        throw GraphError("part spec line " + std::to_string(lineno) + ": joint " + a + " outside [0, " +
                         std::to_string(joint_count) + ")");
      joint_assignments[idx].push_back(b);
    } else {
      if (part_global.count(a))
        throw GraphError("part spec line " + std::to_string(lineno) + ": part '" + a + "' assigned twice");
      part_global[a] = b;
      spec.part_names.push_back(a);
      spec.part_global.push_back(b);
      if (index_of(spec.global_names, b) == spec.global_names.size()) spec.global_names.push_back(b);
    }
  }
  if (!bad_lines.empty()) {
    std::string lines;
    for (std::size_t i = 0; i < bad_lines.size(); ++i) lines += (i ? ", " : "") + bad_lines[i];
    throw GraphError("malformed part spec lines: " + lines);
  }

  std::vector<std::size_t> unassigned, multiple;
  for (std::size_t j = 0; j < joint_count; ++j) {
    auto it = joint_assignments.find(j);
    if (it == joint_assignments.end()) unassigned.push_back(j);
    else if (it->second.size() > 1) multiple.push_back(j);
    else spec.joint_part[j] = it->second.front();
  }
  if (!unassigned.empty() || !multiple.empty()) {
    std::string msg = "invalid joint grouping:";
    if (!unassigned.empty()) msg += " unassigned joints [" + join_indices(unassigned) + "]";
    if (!multiple.empty()) msg += " joints assigned to multiple parts [" + join_indices(multiple) + "]";
    throw GraphError(msg);
  }
  return spec;
}

PartSpec load_part_spec(const std::string& path, std::size_t joint_count) {
  std::ifstream in(path);
  if (!in) throw GraphError("cannot open part spec '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_part_spec(ss.str(), joint_count);
}

std::string format_part_spec(const PartSpec& spec) {
  std::ostringstream os;
  for (std::size_t j = 0; j < spec.joint_part.size(); ++j) os << "joint " << j << ' ' << spec.joint_part[j] << '\n';
  for (std::size_t p = 0; p < spec.part_names.size(); ++p)
    os << "part " << spec.part_names[p] << ' ' << spec.part_global[p] << '\n';
  return os.str();
}

PartSpec default_part_spec() {
  static const char* kText = R"(# default 13-joint grouping
joint 0 right_leg
joint 1 left_leg
joint 2 right_leg
joint 3 left_leg
joint 4 spine
joint 5 spine
joint 6 right_arm
joint 7 left_arm
joint 8 right_arm
joint 9 left_arm
joint 10 right_arm
joint 11 left_arm
joint 12 head
part right_arm right
part right_leg right
part left_arm left
part left_leg left
part spine center
part head center
)";
  return parse_part_spec(kText, 13);
}

void validate_membership(const Tensor& m, const char* what) {
  const std::size_t rows = m.rows(), cols = m.cols();
  std::vector<std::size_t> bad_cols, empty_rows;
  for (std::size_t c = 0; c < cols; ++c) {
    std::size_t ones = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      if (m(r, c) != 0.0 && m(r, c) != 1.0) throw GraphError(std::string(what) + ": membership must be binary");
      ones += m(r, c) == 1.0;
    }
    if (ones != 1) bad_cols.push_back(c);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    bool any = false;
    for (std::size_t c = 0; c < cols; ++c) any = any || m(r, c) != 0.0;
    if (!any) empty_rows.push_back(r);
  }
  if (!bad_cols.empty())
    throw GraphError(std::string(what) + ": members not in exactly one group: " + join_indices(bad_cols));
  if (!empty_rows.empty()) throw GraphError(std::string(what) + ": empty groups: " + join_indices(empty_rows));
}

Hierarchy build_hierarchy(const SkeletonTopology& topology, const PartSpec& parts) {
  topology.validate();
  const std::size_t n = topology.joint_count;
  if (parts.joint_part.size() != n)
    throw GraphError("part spec covers " + std::to_string(parts.joint_part.size()) + " joints, skeleton has " +
                     std::to_string(n));
  if (parts.part_names.size() != parts.part_global.size()) throw GraphError("part spec: part/global length mismatch");

  std::vector<std::size_t> offenders;
  for (std::size_t j = 0; j < n; ++j)
    if (index_of(parts.part_names, parts.joint_part[j]) == parts.part_names.size()) offenders.push_back(j);
  if (!offenders.empty())
    throw GraphError("joints assigned to no declared part: " + join_indices(offenders));
  if (parts.global_names.empty() || parts.global_names.size() > parts.part_names.size())
    throw GraphError("expected between 1 and " + std::to_string(parts.part_names.size()) + " global groups, got " +
                     std::to_string(parts.global_names.size()));

  Hierarchy h;
  h.topology = topology;
  h.parts = parts;
  const std::size_t p_count = parts.part_names.size();
  h.joint_to_part = membership_matrix(parts.joint_part, parts.part_names);
  h.part_to_global = membership_matrix(parts.part_global, parts.global_names);
  validate_membership(h.joint_to_part, "joint->part kernel");
  validate_membership(h.part_to_global, "part->global kernel");

  h.level1 = spatial_partition(topology);
  h.level2 = fully_connected(p_count);
  h.level3 = fully_connected(parts.global_names.size());
  return h;
}

Tensor membership_matrix(const std::vector<std::string>& member_group, const std::vector<std::string>& groups) {
  Tensor m = Tensor::matrix(groups.size(), member_group.size());
  for (std::size_t j = 0; j < member_group.size(); ++j) {
    const std::size_t g = index_of(groups, member_group[j]);
    if (g == groups.size()) throw GraphError("member " + std::to_string(j) + " maps to unknown group '" + member_group[j] + "'");
    m(g, j) = 1.0;
  }
  return m;
}

Tensor pooling_operator(const Tensor& membership) {
  Tensor out = membership;
  const std::size_t rows = out.rows(), cols = out.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += out(r, c);
    if (s == 0.0) throw GraphError("pooling operator: empty group " + std::to_string(r));
    for (std::size_t c = 0; c < cols; ++c) out(r, c) /= s;
  }
  return out;
}

}  // namespace stpgn::graph
