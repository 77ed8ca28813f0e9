#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "xformtree/mat4.hpp"
#include "xformtree/motion_track.hpp"
#include "xformtree/pointset.hpp"

namespace xformtree {

/// Stable node identifier. Assigned at insertion, never reused.
struct NodeId {
  std::int64_t value = -1;

  constexpr NodeId() = default;
  constexpr explicit NodeId(std::int64_t v) : value(v) {}
  constexpr bool operator==(const NodeId&) const = default;
  constexpr auto operator<=>(const NodeId&) const = default;
};

/// Carries a transformation matrix; the only node kind (besides Motion)
/// that contributes to cumulative transforms.
struct TransformNode {
  Mat4 matrix;
};

/// Carries geometry, either loaded points or an opaque file reference.
/// Object nodes may have children (e.g. segmentations under a volume).
struct ObjectNode {
  std::optional<PointSet> geometry;
  std::string file_ref;               // as written in the source archive
  std::string dpw_type = "shell";     // `shell` or `volume` on export
};

/// Pure structural grouping, no payload.
struct GroupNode {};

/// Time-parameterized transform. A missing track (structure-only load)
/// contributes identity.
struct MotionNode {
  std::optional<MotionTrack> track;
  std::string file_ref;
};

using NodePayload = std::variant<TransformNode, ObjectNode, GroupNode, MotionNode>;
using Metadata = std::map<std::string, std::string>;

struct Node {
  NodeId id;
  std::string label;
  NodePayload payload;
  std::optional<NodeId> parent;
  std::vector<NodeId> children;
  Metadata metadata;

  bool is_transform() const { return std::holds_alternative<TransformNode>(payload); }
  bool is_object() const { return std::holds_alternative<ObjectNode>(payload); }
  bool is_group() const { return std::holds_alternative<GroupNode>(payload); }
  bool is_motion() const { return std::holds_alternative<MotionNode>(payload); }

  const TransformNode* as_transform() const { return std::get_if<TransformNode>(&payload); }
  const ObjectNode* as_object() const { return std::get_if<ObjectNode>(&payload); }
  const MotionNode* as_motion() const { return std::get_if<MotionNode>(&payload); }
  TransformNode* as_transform() { return std::get_if<TransformNode>(&payload); }
  ObjectNode* as_object() { return std::get_if<ObjectNode>(&payload); }
  MotionNode* as_motion() { return std::get_if<MotionNode>(&payload); }
};

struct Camera {
  std::string label;
  Mat4 pose;
};

enum class DiagnosticKind {
  UnknownChild,    // child id not present in the store
  LinkMismatch,    // parent/child fields disagree
  Cycle,           // node reachable from itself
  DuplicateChild,  // node appears under more than one parent
  Orphan,          // node not reachable from any root
  SingularTransform,
};

inline const char* to_string(DiagnosticKind k) {
  switch (k) {
    case DiagnosticKind::UnknownChild: return "UnknownChild";
    case DiagnosticKind::LinkMismatch: return "LinkMismatch";
    case DiagnosticKind::Cycle: return "Cycle";
    case DiagnosticKind::DuplicateChild: return "DuplicateChild";
    case DiagnosticKind::Orphan: return "Orphan";
    case DiagnosticKind::SingularTransform: return "SingularMatrix";
  }
  return "Unknown";
}

struct Diagnostic {
  DiagnosticKind kind;
  NodeId node;
  std::string detail;
};

struct ReparentResult {
  NodeId compensation_node;
  Mat4 compensation;
};

/// Forest of transformation-tree models plus camera transforms. Transform
/// and Motion nodes define coordinate systems for their descendants;
/// Object and Group nodes contribute identity.
///
/// Mutating operations require exclusive access; const queries may run
/// concurrently between writers.
class Workspace {
 public:
  NodeId insert(std::optional<NodeId> parent, NodePayload payload,
                std::string label = {}, Metadata metadata = {}) {
    if (parent && !contains(*parent))
      throw UnknownParent("parent #" + std::to_string(parent->value) + " does not exist");
    if (const auto* t = std::get_if<TransformNode>(&payload)) {
      if (!t->matrix.is_affine())
        throw NotAffine("transform node matrix must have bottom row (0,0,0,1)");
      if (!t->matrix.is_invertible())
        throw SingularMatrix("transform node matrix is singular");
    }
    const NodeId id{next_id_++};
    Node node;
    node.id = id;
    node.label = std::move(label);
    node.payload = std::move(payload);
    node.parent = parent;
    node.metadata = std::move(metadata);
    nodes_.emplace(id.value, std::move(node));
    if (parent)
      nodes_.at(parent->value).children.push_back(id);
    else
      roots_.push_back(id);
    return id;
  }

  NodeId insert_transform(std::optional<NodeId> parent, const Mat4& m,
                          std::string label = {}) {
    return insert(parent, TransformNode{m}, std::move(label));
  }
  NodeId insert_object(std::optional<NodeId> parent, PointSet geometry,
                       std::string label = {}) {
    return insert(parent, ObjectNode{std::move(geometry), {}, "shell"}, std::move(label));
  }
  NodeId insert_group(std::optional<NodeId> parent, std::string label = {}) {
    return insert(parent, GroupNode{}, std::move(label));
  }
  NodeId insert_motion(std::optional<NodeId> parent, MotionTrack track,
                       std::string label = {}) {
    return insert(parent, MotionNode{std::move(track), {}}, std::move(label));
  }

  bool contains(NodeId id) const { return nodes_.count(id.value) != 0; }

  const Node& node(NodeId id) const {
    auto it = nodes_.find(id.value);
    if (it == nodes_.end())
      throw UnknownNode("node #" + std::to_string(id.value) + " does not exist");
    return it->second;
  }

  /// Direct mutable access. Structural invariants are not re-checked;
  /// intended for metadata edits and for fault-injection in tests.
  Node& node_mut(NodeId id) {
    auto it = nodes_.find(id.value);
    if (it == nodes_.end())
      throw UnknownNode("node #" + std::to_string(id.value) + " does not exist");
    return it->second;
  }

  std::span<const NodeId> roots() const { return roots_; }
  std::size_t size() const { return nodes_.size(); }

  /// Ids in ascending id order (insertion order).
  std::vector<NodeId> all_nodes() const {
    std::vector<NodeId> out;
    out.reserve(nodes_.size());
    for (const auto& [id, n] : nodes_) out.push_back(NodeId{id});
    return out;
  }

  NodeId root_of(NodeId id) const {
    const Node* n = &node(id);
    while (n->parent) n = &node(*n->parent);
    return n->id;
  }

  bool is_ancestor(NodeId ancestor, NodeId descendant) const {
    std::optional<NodeId> cur = node(descendant).parent;
    while (cur) {
      if (*cur == ancestor) return true;
      cur = node(*cur).parent;
    }
    return false;
  }

  /// Depth-first preorder ids of the subtree rooted at `root`.
  std::vector<NodeId> preorder(NodeId root) const {
    std::vector<NodeId> out;
    std::vector<NodeId> stack{root};
    node(root);  // existence check
    while (!stack.empty()) {
      const NodeId id = stack.back();
      stack.pop_back();
      out.push_back(id);
      const Node& n = node(id);
      for (auto it = n.children.rbegin(); it != n.children.rend(); ++it)
        stack.push_back(*it);
    }
    return out;
  }

  // --- cameras ---

  std::size_t add_camera(std::string label, const Mat4& pose) {
    cameras_.push_back({std::move(label), pose});
    return cameras_.size() - 1;
  }
  std::span<const Camera> cameras() const { return cameras_; }

  // --- evaluation time for Motion nodes in static queries ---
  // Defaults to -infinity, which clamps to every track's first sample.

  double evaluation_time() const { return eval_time_; }
  void set_evaluation_time(double t) { eval_time_ = t; }

  // --- queries ---

  /// Product of the transform matrices on the path from the root down to
  /// `id`, root-side factors leftmost. Motion nodes contribute their pose
  /// sampled at the workspace evaluation time.
  Mat4 cumulative_transform(NodeId id) const {
    return cumulative_transform_at(id, eval_time_);
  }

  Mat4 cumulative_transform_at(NodeId id, double time) const {
    std::vector<const Node*> path;  // node -> root
    const Node* n = &node(id);
    while (true) {
      path.push_back(n);
      if (!n->parent) break;
      n = &node(*n->parent);
    }
    Mat4 acc;
    for (auto it = path.rbegin(); it != path.rend(); ++it)
      if (auto m = contribution(**it, time)) acc = compose(acc, *m);
    return acc;
  }

  /// Local geometry of an Object node mapped into world coordinates.
  PointSet world_points(NodeId id) const { return world_points_at(id, eval_time_); }

  PointSet world_points_at(NodeId id, double time) const {
    const Node& n = node(id);
    const ObjectNode* obj = n.as_object();
    if (!obj || !obj->geometry)
      throw NoGeometry("node #" + std::to_string(id.value) + " carries no geometry");
    return apply(cumulative_transform_at(id, time), *obj->geometry);
  }

  /// Depth-first concatenation of the world points of every Object node in
  /// the subtree, each point tagged with its source node id. Objects whose
  /// geometry is an unresolved file reference contribute nothing.
  PointSet flatten(NodeId root) const { return flatten_at(root, eval_time_); }

  PointSet flatten_at(NodeId root, double time) const {
    PointSet out;
    // Carry the accumulated matrix down the tree; composing in the same
    // left-to-right order as cumulative_transform_at.
    struct Entry { NodeId id; Mat4 acc; };
    const Node& r = node(root);
    Mat4 base;
    {  // transforms above the subtree root still apply
      if (r.parent) base = cumulative_transform_at(*r.parent, time);
    }
    std::vector<Entry> stack{{root, base}};
    while (!stack.empty()) {
      Entry e = stack.back();
      stack.pop_back();
      const Node& n = node(e.id);
      Mat4 acc = e.acc;
      if (auto m = contribution(n, time)) acc = compose(acc, *m);
      if (const ObjectNode* obj = n.as_object(); obj && obj->geometry)
        out.append(apply(acc, *obj->geometry).retagged(n.id.value));
      for (auto it = n.children.rbegin(); it != n.children.rend(); ++it)
        stack.push_back({*it, acc});
    }
    return out;
  }

  /// Indirect registration through the tree: returns P_b^-1 * P_a, mapping
  /// a-local coordinates into b-local coordinates. Both nodes must belong
  /// to the same model.
  Mat4 transform_between(NodeId a, NodeId b) const {
    if (root_of(a) != root_of(b))
      throw DifferentModels("nodes #" + std::to_string(a.value) + " and #" +
                            std::to_string(b.value) +
                            " are not linked to the same model");
    const Mat4 pa = cumulative_transform(a);
    const Mat4 pb = cumulative_transform(b);
    return compose(invert(pb), pa);
  }

  /// Moves `id` under `new_parent`, inserting one fresh Transform node whose
  /// matrix compensates the frame change so every world pose in the moved
  /// subtree is unchanged. Returns the inserted node and its matrix.
  ReparentResult reparent(NodeId id, NodeId new_parent) {
    const Node& n = node(id);
    node(new_parent);
    if (id == new_parent || is_ancestor(id, new_parent))
      throw CycleWouldForm("cannot move #" + std::to_string(id.value) +
                           " under its own subtree");
    const Mat4 p_new = cumulative_transform(new_parent);
    const Mat4 p_excl = n.parent ? cumulative_transform(*n.parent) : Mat4::identity();
    const Mat4 comp = compose(invert(p_new), p_excl);

    const NodeId comp_id = insert_transform(new_parent, comp);
    detach(id);
    nodes_.at(id.value).parent = comp_id;
    nodes_.at(comp_id.value).children.push_back(id);
    return {comp_id, comp};
  }

  /// Splices a fresh Transform node between `child` and its parent, taking
  /// the child's position in the sibling order (or the root slot). World
  /// poses below change by the inserted matrix.
  NodeId insert_above(NodeId child, const Mat4& m, std::string label = {},
                      Metadata metadata = {}) {
    Node& c = node_mut(child);
    if (!m.is_affine()) throw NotAffine("transform node matrix must have bottom row (0,0,0,1)");
    if (!m.is_invertible()) throw SingularMatrix("transform node matrix is singular");
    const std::optional<NodeId> parent = c.parent;
    const NodeId id{next_id_++};
    Node n;
    n.id = id;
    n.label = std::move(label);
    n.payload = TransformNode{m};
    n.parent = parent;
    n.children.push_back(child);
    n.metadata = std::move(metadata);
    nodes_.emplace(id.value, std::move(n));
    auto& slots = parent ? nodes_.at(parent->value).children : roots_;
    std::replace(slots.begin(), slots.end(), child, id);
    nodes_.at(child.value).parent = id;
    return id;
  }

  /// New workspace re-expressed in `frame`'s coordinate system: every model
  /// root is wrapped in a Transform node carrying the inverse cumulative
  /// transform of `frame`, so frame-local and world coordinates coincide.
  Workspace express_in(NodeId frame) const {
    const Mat4 inv = invert(cumulative_transform(frame));
    Workspace out = *this;
    for (NodeId& root : out.roots_) {
      const NodeId wrapper = NodeId{out.next_id_++};
      Node w;
      w.id = wrapper;
      w.payload = TransformNode{inv};
      w.children.push_back(root);
      out.nodes_.emplace(wrapper.value, std::move(w));
      out.nodes_.at(root.value).parent = wrapper;
      root = wrapper;
    }
    return out;
  }

  /// Inserts Transform(shared) under the members' common parent and moves
  /// each member beneath it, world poses unchanged (each member gets a
  /// shared^-1 compensation via reparent). Returns the new group node.
  NodeId make_group(std::span<const NodeId> members, const Mat4& shared,
                    std::string label = {}) {
    if (members.empty()) throw InvalidArgument("make_group needs at least one member");
    std::optional<NodeId> parent = node(members.front()).parent;
    for (std::size_t i = 0; i < members.size(); ++i) {
      const Node& m = node(members[i]);
      if (m.parent != parent)
        throw NotSiblings("group members must share one parent");
      for (std::size_t j = i + 1; j < members.size(); ++j)
        if (members[i] == members[j])
          throw InvalidArgument("duplicate group member #" +
                                std::to_string(members[i].value));
    }
    const NodeId group = insert(parent, TransformNode{shared}, std::move(label));
    for (NodeId m : members) reparent(m, group);
    return group;
  }

  NodeId make_group(std::initializer_list<NodeId> members, const Mat4& shared,
                    std::string label = {}) {
    return make_group(std::span<const NodeId>(members.begin(), members.size()),
                      shared, std::move(label));
  }

  /// World points of an object as seen through camera `index`:
  /// P_w * cumulative * local.
  PointSet view_points(std::size_t index, NodeId id) const {
    if (index >= cameras_.size())
      throw UnknownCamera("camera " + std::to_string(index) + " does not exist");
    const Node& n = node(id);
    const ObjectNode* obj = n.as_object();
    if (!obj || !obj->geometry)
      throw NoGeometry("node #" + std::to_string(id.value) + " carries no geometry");
    return apply(compose(cameras_[index].pose, cumulative_transform(id)), *obj->geometry);
  }

  /// Structural health check; empty result iff the workspace is well-formed.
  std::vector<Diagnostic> validate() const {
    std::vector<Diagnostic> out;
    std::map<std::int64_t, int> seen;  // id -> times reached from a root
    for (NodeId root : roots_) {
      auto it = nodes_.find(root.value);
      if (it == nodes_.end()) {
        out.push_back({DiagnosticKind::UnknownChild, root, "root id not in store"});
        continue;
      }
      if (it->second.parent)
        out.push_back({DiagnosticKind::LinkMismatch, root,
                       "root node has a parent link"});
      walk_validate(root, out, seen);
    }
    for (const auto& [id, n] : nodes_) {
      if (!seen.count(id))
        out.push_back({DiagnosticKind::Orphan, NodeId{id},
                       "not reachable from any root"});
      if (const TransformNode* t = n.as_transform()) {
        if (!t->matrix.is_affine())
          out.push_back({DiagnosticKind::SingularTransform, NodeId{id},
                         "matrix bottom row is not (0,0,0,1)"});
        else if (!t->matrix.is_invertible())
          out.push_back({DiagnosticKind::SingularTransform, NodeId{id},
                         "matrix determinant below threshold"});
      }
    }
    return out;
  }

  /// Removes a subtree. Ids are never reused afterwards.
  void erase(NodeId id) {
    const std::vector<NodeId> doomed = preorder(id);
    detach(id);
    for (NodeId d : doomed) nodes_.erase(d.value);
  }

 private:
  static std::optional<Mat4> contribution(const Node& n, double time) {
    if (const TransformNode* t = n.as_transform()) return t->matrix;
    if (const MotionNode* m = n.as_motion(); m && m->track)
      return m->track->sample(time);
    return std::nullopt;
  }

  void detach(NodeId id) {
    Node& n = nodes_.at(id.value);
    if (n.parent) {
      auto& siblings = nodes_.at(n.parent->value).children;
      std::erase(siblings, id);
    } else {
      std::erase(roots_, id);
    }
    n.parent = std::nullopt;
  }

  void walk_validate(NodeId root, std::vector<Diagnostic>& out,
                     std::map<std::int64_t, int>& seen) const {
    struct Frame { NodeId id; std::vector<NodeId> ancestors; };
    std::vector<Frame> stack{{root, {}}};
    while (!stack.empty()) {
      Frame f = std::move(stack.back());
      stack.pop_back();
      auto it = nodes_.find(f.id.value);
      if (it == nodes_.end()) continue;
      int& count = seen[f.id.value];
      ++count;
      if (count > 1) {
        bool on_path = false;
        for (NodeId a : f.ancestors)
          if (a == f.id) { on_path = true; break; }
        out.push_back({on_path ? DiagnosticKind::Cycle : DiagnosticKind::DuplicateChild,
                       f.id, on_path ? "node is its own ancestor"
                                     : "reached through multiple parents"});
        continue;  // do not descend again
      }
      const Node& n = it->second;
      std::vector<NodeId> ancestors = f.ancestors;
      ancestors.push_back(f.id);
      for (NodeId c : n.children) {
        auto cit = nodes_.find(c.value);
        if (cit == nodes_.end()) {
          out.push_back({DiagnosticKind::UnknownChild, c,
                         "child of #" + std::to_string(f.id.value) +
                             " not in store"});
          continue;
        }
        if (cit->second.parent != std::optional<NodeId>(f.id))
          out.push_back({DiagnosticKind::LinkMismatch, c,
                         "parent field does not point at #" +
                             std::to_string(f.id.value)});
        stack.push_back({c, ancestors});
      }
    }
  }

  std::map<std::int64_t, Node> nodes_;
  std::vector<NodeId> roots_;
  std::vector<Camera> cameras_;
  std::int64_t next_id_ = 1;
  double eval_time_ = -std::numeric_limits<double>::infinity();
};

}  // namespace xformtree
