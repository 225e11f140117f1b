#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "stpgn/tensor.hpp"

namespace stpgn::graph {

struct GraphError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Undirected skeleton. Self-connections are never listed; they are added
// analytically when the adjacency is partitioned.
struct SkeletonTopology {
  std::size_t joint_count = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::size_t center_joint = 0;
  std::vector<std::string> joint_names;

  // Throws GraphError on out-of-range edges, self loops, a bad center or a
  // disconnected graph (naming the unreachable joints).
  void validate() const;
};

// 13-joint layout used by common monocular 3D pose extractors:
//  0 right_ankle   1 left_ankle    2 right_knee     3 left_knee
//  4 right_hip     5 left_hip      6 right_wrist    7 left_wrist
//  8 right_elbow   9 left_elbow   10 right_shoulder 11 left_shoulder
// 12 head
SkeletonTopology default_skeleton();

// Raw symmetric adjacency A (no self loops).
Tensor adjacency_matrix(const SkeletonTopology& topology);

// Breadth-first hop distance from the center joint; -1 for unreachable joints.
std::vector<int> hop_distances(const SkeletonTopology& topology);

// diag(r)^-1/2 A diag(c)^-1/2, r and c the row and column sums of A.
// Zero-degree rows/columns contribute 0. For symmetric A this is the usual
// D^-1/2 A D^-1/2.
Tensor normalize_adjacency(const Tensor& a);

// Spatial configuration partitions. Entry (i, j) of a partition means node i
// aggregates from node j.
struct PartitionedAdjacency {
  // [0] self (plus equal-distance neighbours), [1] centripetal (j closer to
  // the center than i), [2] centrifugal (j farther).
  std::vector<Tensor> partitions;
  std::vector<Tensor> normalized;

  std::size_t node_count() const { return partitions.empty() ? 0 : partitions.front().rows(); }
  Tensor sum() const;
};

PartitionedAdjacency spatial_partition(const SkeletonTopology& topology);

// Single partition holding the all-ones (fully connected, self included) graph.
PartitionedAdjacency fully_connected(std::size_t nodes);

// Learnable per-partition multiplicative masks, all-ones at construction.
struct EdgeImportance {
  std::vector<Tensor> masks;
  static EdgeImportance ones_like(const PartitionedAdjacency& adjacency);
};

// Element-wise A_a * M_a, applied before normalization.
Tensor apply_edge_importance(const Tensor& partition, const Tensor& mask);

// Joint -> part -> global group assignment.
struct PartSpec {
  std::vector<std::string> joint_part;  // one entry per joint
  std::vector<std::string> part_names;  // ordered
  std::vector<std::string> part_global; // parallel to part_names
  std::vector<std::string> global_names;  // ordered; a 3-level model needs exactly 3
};

// Plain-text format, one assignment per line, '#' starts a comment:
//   joint <index> <part>
//   part <part> <global>
PartSpec parse_part_spec(const std::string& text, std::size_t joint_count);
PartSpec load_part_spec(const std::string& path, std::size_t joint_count);
std::string format_part_spec(const PartSpec& spec);

// Six parts over the default skeleton (arms, legs, spine = hips, head) and
// the globals right (arm+leg), left (arm+leg), center (head+spine).
PartSpec default_part_spec();

struct Hierarchy {
  SkeletonTopology topology;
  PartSpec parts;
  Tensor joint_to_part;   // J_1, P x N binary membership
  Tensor part_to_global;  // J_2, G x P binary membership
  PartitionedAdjacency level1;
  PartitionedAdjacency level2;
  PartitionedAdjacency level3;

  std::size_t joints() const { return topology.joint_count; }
  std::size_t part_count() const { return joint_to_part.rows(); }
  std::size_t global_count() const { return part_to_global.rows(); }
};

Hierarchy build_hierarchy(const SkeletonTopology& topology, const PartSpec& parts);

// Binary membership matrix, one row per group: (g, j) = 1 iff member j
// belongs to groups[g]. Unknown group names raise GraphError.
Tensor membership_matrix(const std::vector<std::string>& member_group, const std::vector<std::string>& groups);

// Row-normalized membership: output row g averages the members of group g.
Tensor pooling_operator(const Tensor& membership);

// Throws GraphError unless every column has exactly one 1 and every row at least one.
void validate_membership(const Tensor& membership, const char* what);

}  // namespace stpgn::graph
