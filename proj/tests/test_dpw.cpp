#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "generators.hpp"
#include "oracles.hpp"
#include "xformtree/xformtree.hpp"

using namespace xformtree;

namespace {

// Minimal archive describing a mesh reference, formatted the way a human
// would write it (4-space indent, wrapped matrix rows).
const char* const kMeshRefText = R"(shell {
    label "example_object"
    file "path/to/file.mesh"
}
)";

const char* const kIdentityTransText = R"(trans {
    label "Identity transformation"
    matrix [ 1.0 0.0 0.0 0.0
             0.0 1.0 0.0 0.0
             0.0 0.0 1.0 0.0
             0.0 0.0 0.0 1.0 ]
}
)";

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

const Node& only_child(const Workspace& ws, NodeId parent) {
  const Node& p = ws.node(parent);
  REQUIRE(p.children.size() == 1);
  return ws.node(p.children[0]);
}

}  // namespace

TEST_CASE("parses an object with label and file reference") {
  const DpwDocument doc = parse_dpw(kMeshRefText);
  REQUIRE(doc.roots.size() == 1);
  const DpwObject& shell = doc.roots[0];
  CHECK(shell.object_type == "shell");
  CHECK(shell.label() == "example_object");
  CHECK(shell.string_property("file") == "path/to/file.mesh");
  CHECK(shell.properties.size() == 2);
  CHECK(shell.children.empty());
  CHECK(shell.location.line == 1);
  CHECK(shell.location.column == 1);
  CHECK(shell.properties[0].location.line == 2);
  CHECK(shell.properties[0].location.column == 5);
}

TEST_CASE("parses a transform with a 16-number row-major matrix") {
  const DpwDocument doc = parse_dpw(kIdentityTransText);
  REQUIRE(doc.roots.size() == 1);
  const DpwObject& trans = doc.roots[0];
  CHECK(trans.object_type == "trans");
  CHECK(trans.label() == "Identity transformation");
  const DpwProperty* mp = trans.find_property("matrix");
  REQUIRE(mp != nullptr);
  const auto& list = std::get<std::vector<double>>(mp->value);
  REQUIRE(list.size() == 16);
  CHECK(max_abs_diff(matrix_from_list(list), Mat4::identity()) == 0.0);
}

TEST_CASE("serialization fixpoint on the reference documents") {
  for (const char* text : {kMeshRefText, kIdentityTransText}) {
    const DpwDocument doc = parse_dpw(text);
    const std::string first = serialize_dpw(doc);
    const DpwDocument again = parse_dpw(first);
    CHECK(structurally_equal(doc, again));
    CHECK(serialize_dpw(again) == first);
  }
}

TEST_CASE("empty and comment-only input parse to the empty document") {
  CHECK(parse_dpw("").roots.empty());
  CHECK(parse_dpw("   \n\t\r\n").roots.empty());
  CHECK(parse_dpw("# nothing here\n# or here").roots.empty());
  CHECK(serialize_dpw(DpwDocument{}).empty());
}

TEST_CASE("whitespace and comments are insignificant") {
  const DpwDocument tight = parse_dpw(
      "group{trans{matrix[1 0 0 0 0 1 0 0 0 0 1 0 0 0 0 1]}shell{label \"s\"}}");
  const DpwDocument commented = parse_dpw(R"(# scene
group {          # a group
  trans {
    matrix [ 1 0 0 0
             0 1 0 0  # row two
             0 0 1 0
             0 0 0 1 ]
  }
  shell { label "s" }
}
)");
  CHECK(structurally_equal(tight, commented));
}

TEST_CASE("string escapes for quote and backslash round-trip") {
  const DpwDocument doc = parse_dpw(R"(shell { label "a\"b\\c" })");
  REQUIRE(doc.roots.size() == 1);
  CHECK(doc.roots[0].label() == "a\"b\\c");
  const std::string text = serialize_dpw(doc);
  CHECK(text.find(R"(label "a\"b\\c")") != std::string::npos);
  CHECK(structurally_equal(parse_dpw(text), doc));
  CHECK(serialize_dpw(parse_dpw(text)) == text);
}

TEST_CASE("generated documents serialize to a byte-stable fixpoint") {
  gen::Rng rng(20240501);
  for (int i = 0; i < 500; ++i) {
    const DpwDocument doc = gen::random_dpw_document(rng);
    const std::string first = serialize_dpw(doc);
    DpwDocument again;
    try {
      again = parse_dpw(first);
    } catch (const ParseError& e) {
      INFO("document " << i << ": " << e.what() << "\n" << first);
      FAIL("serialized output failed to parse");
    }
    REQUIRE(structurally_equal(doc, again));
    REQUIRE(serialize_dpw(again) == first);
  }
}

TEST_CASE("matrix entries survive text form exactly") {
  std::vector<double> values = {1.0 / 3.0,
                                0.1,
                                1e-17,
                                1e15,
                                -2.2250738585072014e-308,
                                123456789.123456789,
                                -0.0,
                                3.141592653589793,
                                -6.02e23,
                                1.0000000000000002,  // one ulp above 1
                                -7.0,
                                5e-324,
                                0.0,
                                2.0,
                                -1e300,
                                1.0};
  DpwObject trans;
  trans.object_type = "trans";
  trans.properties.push_back({"matrix", values, {}});
  DpwDocument doc;
  doc.roots.push_back(trans);

  const DpwDocument back = parse_dpw(serialize_dpw(doc));
  const auto& got =
      std::get<std::vector<double>>(back.roots[0].find_property("matrix")->value);
  REQUIRE(got.size() == 16);
  for (std::size_t i = 0; i < 16; ++i) CHECK(got[i] == values[i]);
}

TEST_CASE("parse errors carry their location") {
  try {
    parse_dpw("shell ( )");
    FAIL("expected SyntaxError");
  } catch (const SyntaxError& e) {
    CHECK(e.line() == 1);
    CHECK(e.column() == 7);
  }

  try {
    parse_dpw("group {\n  trans {\n");
    FAIL("expected UnbalancedBraces");
  } catch (const UnbalancedBraces& e) {
    // the innermost unclosed brace is the useful one to point at
    CHECK(e.line() == 2);
    CHECK(e.column() == 9);
  }

  CHECK_THROWS_AS(parse_dpw("}"), UnbalancedBraces);
  CHECK_THROWS_AS(parse_dpw("shell {"), UnbalancedBraces);
  CHECK_THROWS_AS(parse_dpw("group { x [ 1 2 "), UnbalancedBraces);
  CHECK_THROWS_AS(parse_dpw("shell { label \"oops }\n"), MalformedString);
  CHECK_THROWS_AS(parse_dpw("shell { label \"oops"), MalformedString);
  CHECK_THROWS_AS(parse_dpw(R"(group { x "a\nb" })"), SyntaxError);
  CHECK_THROWS_AS(parse_dpw("42"), SyntaxError);
  CHECK_THROWS_AS(parse_dpw("shell shell"), SyntaxError);
  CHECK_THROWS_AS(parse_dpw("group { x [ 1 oops ] }"), SyntaxError);
  CHECK_THROWS_AS(parse_dpw("group { x 1e }"), SyntaxError);
  CHECK_THROWS_AS(parse_dpw("group { x + }"), SyntaxError);
}

TEST_CASE("transform matrix arity is enforced at parse time") {
  try {
    parse_dpw("trans { matrix [ 1 2 3 ] }");
    FAIL("expected MalformedMatrix");
  } catch (const MalformedMatrix& e) {
    CHECK(std::string(e.what()).find("(got 3)") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_dpw("trans { label \"t\" }"), MalformedMatrix);
  CHECK_THROWS_AS(parse_dpw("trans { matrix \"I\" }"), MalformedMatrix);
  CHECK_THROWS_AS(
      parse_dpw("trans { matrix [ 1 0 0 0 0 1 0 0 0 0 1 0 0 0 0 1 ] "
                "matrix [ 1 0 0 0 0 1 0 0 0 0 1 0 0 0 0 1 ] }"),
      MalformedMatrix);
  CHECK_THROWS_AS(parse_dpw("shell { file \"a\" file \"b\" }"), SyntaxError);
}

TEST_CASE("workspace import: transform chain matches matrix composition") {
  gen::Rng rng(20240502);
  const Mat4 a = gen::random_rigid(rng);
  const Mat4 b = gen::random_similarity(rng);

  DpwObject shell;
  shell.object_type = "shell";
  shell.properties.push_back({"label", std::string("surface"), {}});
  DpwObject inner;
  inner.object_type = "trans";
  inner.properties.push_back({"matrix", list_from_matrix(b), {}});
  inner.children.push_back(shell);
  DpwObject outer;
  outer.object_type = "trans";
  outer.properties.push_back({"matrix", list_from_matrix(a), {}});
  outer.children.push_back(inner);
  DpwDocument doc;
  doc.roots.push_back(outer);

  const Workspace ws = to_workspace(doc, NullResolver{});
  REQUIRE(ws.roots().size() == 1);
  const Node& mid = only_child(ws, ws.roots()[0]);
  const Node& leaf = only_child(ws, mid.id);
  CHECK(leaf.label == "surface");
  CHECK(max_abs_diff(ws.cumulative_transform(leaf.id), compose(a, b)) <= 1e-15 * 100);
  CHECK(max_abs_diff(oracle::path_walk(ws, leaf.id), compose(a, b)) <= 1e-15 * 100);
}

TEST_CASE("workspace import preserves unknown properties and types") {
  std::vector<std::string> warnings;
  const DpwDocument doc = parse_dpw(R"(widget {
  label "w"
  note "hello"
  weight 2.5
  window [ 1 2 ]
}
)");
  const Workspace ws =
      to_workspace(doc, NullResolver{}, ResolveMode::Lenient, &warnings);
  REQUIRE(ws.roots().size() == 1);
  const Node& n = ws.node(ws.roots()[0]);
  CHECK(std::holds_alternative<GroupNode>(n.payload));
  CHECK(n.label == "w");
  CHECK(n.metadata.at("dpw_type") == "widget");
  CHECK(n.metadata.at("note") == "hello");
  CHECK(n.metadata.at("dpw:prop:weight") == "2.5");
  CHECK(n.metadata.at("dpw:prop:window") == "[ 1 2 ]");
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("widget") != std::string::npos);

  // plain groups are not flagged and carry no type metadata
  warnings.clear();
  const Workspace plain = to_workspace(parse_dpw("group { }"), NullResolver{},
                                       ResolveMode::Lenient, &warnings);
  CHECK(warnings.empty());
  CHECK(plain.node(plain.roots()[0]).metadata.count("dpw_type") == 0);

  // round trip: the foreign type and all three properties come back
  const DpwDocument out = from_workspace(ws);
  REQUIRE(out.roots.size() == 1);
  const DpwObject& w = out.roots[0];
  CHECK(w.object_type == "widget");
  CHECK(w.label() == "w");
  CHECK(w.string_property("note") == "hello");
  REQUIRE(w.find_property("weight") != nullptr);
  CHECK(std::get<double>(w.find_property("weight")->value) == 2.5);
  REQUIRE(w.find_property("window") != nullptr);
  const std::vector<double> window{1.0, 2.0};
  CHECK(std::get<std::vector<double>>(w.find_property("window")->value) == window);
}

TEST_CASE("geometry references resolve against directories in order") {
  namespace fs = std::filesystem;
  const fs::path primary = fresh_dir("xt_dpw_primary");
  const fs::path fallback = fresh_dir("xt_dpw_fallback");
  const PointSet pts{{1.5, -2.25, 3.0}, {0.0, 4.5, -8.125}};
  write_xyz_file(primary / "local.xyz", pts);
  write_xyz_file(fallback / "shared.xyz", pts);

  const DirResolver resolver(primary, fallback);
  CHECK(resolver.locate("local.xyz") == primary / "local.xyz");
  CHECK(resolver.locate("shared.xyz") == fallback / "shared.xyz");
  CHECK(!resolver.locate("ghost.xyz").has_value());
  CHECK(resolver.locate((primary / "local.xyz").string()) == primary / "local.xyz");

  const DpwDocument doc = parse_dpw("shell { file \"local.xyz\" }");
  const Workspace ws = to_workspace(doc, resolver, ResolveMode::Strict);
  const Node& n = ws.node(ws.roots()[0]);
  const ObjectNode* obj = n.as_object();
  REQUIRE(obj != nullptr);
  REQUIRE(obj->geometry.has_value());
  CHECK(*obj->geometry == pts);
  // resolved references become absolute so the tree can be re-rooted
  CHECK(fs::path(obj->file_ref).is_absolute());

  fs::remove_all(primary);
  fs::remove_all(fallback);
}

TEST_CASE("missing files: strict throws, lenient keeps the reference") {
  const DpwDocument doc = parse_dpw("shell { file \"ghost.xyz\" }");
  CHECK_THROWS_AS(to_workspace(doc, NullResolver{}, ResolveMode::Strict),
                  MissingFile);

  std::vector<std::string> warnings;
  const Workspace ws =
      to_workspace(doc, NullResolver{}, ResolveMode::Lenient, &warnings);
  const ObjectNode* obj = ws.node(ws.roots()[0]).as_object();
  REQUIRE(obj != nullptr);
  CHECK(!obj->geometry.has_value());
  CHECK(obj->file_ref == "ghost.xyz");
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("ghost.xyz") != std::string::npos);
}

TEST_CASE("motion nodes load their track through the resolver") {
  namespace fs = std::filesystem;
  const fs::path dir = fresh_dir("xt_dpw_motion");
  gen::Rng rng(20240503);
  const MotionTrack track = gen::random_track(rng, 3);
  write_motion_track_file(dir / "jaw.mot", track);

  const DpwDocument doc = parse_dpw("motion { file \"jaw.mot\" shell { } }");
  const Workspace ws = to_workspace(doc, DirResolver(dir), ResolveMode::Strict);
  const MotionNode* m = ws.node(ws.roots()[0]).as_motion();
  REQUIRE(m != nullptr);
  REQUIRE(m->track.has_value());
  REQUIRE(m->track->samples().size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(m->track->samples()[i].time == track.samples()[i].time);
    CHECK(max_abs_diff(m->track->samples()[i].pose, track.samples()[i].pose) <=
          1e-12);
  }

  CHECK_THROWS_AS(to_workspace(doc, NullResolver{}, ResolveMode::Strict),
                  MissingFile);
  // structure-only load: the motion node contributes identity
  std::vector<std::string> warnings;
  const Workspace bare =
      to_workspace(doc, NullResolver{}, ResolveMode::Lenient, &warnings);
  const Node& child = only_child(bare, bare.roots()[0]);
  CHECK(max_abs_diff(bare.cumulative_transform(child.id), Mat4::identity()) == 0.0);
  REQUIRE(warnings.size() == 1);
  fs::remove_all(dir);
}

TEST_CASE("singular transform matrices: strict rejects, lenient diagnoses") {
  const DpwDocument doc = parse_dpw(
      "trans { matrix [ 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 ] }");
  CHECK_THROWS_AS(to_workspace(doc, NullResolver{}, ResolveMode::Strict),
                  MalformedTransform);

  std::vector<std::string> warnings;
  const Workspace ws =
      to_workspace(doc, NullResolver{}, ResolveMode::Lenient, &warnings);
  REQUIRE(warnings.size() == 1);
  const auto diags = ws.validate();
  REQUIRE(diags.size() == 1);
  CHECK(diags[0].kind == DiagnosticKind::SingularTransform);
}

TEST_CASE("export stores each in-memory geometry exactly once") {
  namespace fs = std::filesystem;
  const fs::path dir = fresh_dir("xt_dpw_sink");
  gen::Rng rng(20240504);
  const PointSet shared = gen::random_points(rng, 12);
  const PointSet other = gen::random_points(rng, 7);

  Workspace ws;
  const NodeId root = ws.insert_group(std::nullopt, "scene");
  ws.insert_object(root, shared, "left");
  ws.insert_object(root, shared, "right");
  ws.insert_object(root, other, "spare");

  DirGeometrySink sink(dir, "scene");
  const DpwDocument doc = from_workspace(ws, &sink);
  REQUIRE(doc.roots.size() == 1);
  const std::vector<DpwObject>& kids = doc.roots[0].children;
  REQUIRE(kids.size() == 3);
  // every object node carries exactly one geometry reference
  for (const DpwObject& k : kids) {
    int files = 0;
    for (const DpwProperty& p : k.properties) files += (p.key == "file") ? 1 : 0;
    CHECK(files == 1);
  }
  CHECK(kids[0].string_property("file") == kids[1].string_property("file"));
  CHECK(kids[0].string_property("file") != kids[2].string_property("file"));

  std::size_t xyz_files = 0;
  for (const auto& entry : fs::directory_iterator(dir))
    xyz_files += (entry.path().extension() == ".xyz") ? 1 : 0;
  CHECK(xyz_files == 2);
  fs::remove_all(dir);
}

TEST_CASE("export without a sink requires file references") {
  Workspace with_payload;
  with_payload.insert_object(std::nullopt, PointSet{{1, 2, 3}});
  CHECK_THROWS_AS(from_workspace(with_payload), UnexportableGeometry);

  Workspace empty_obj;
  const NodeId id = empty_obj.insert_object(std::nullopt, PointSet{});
  ObjectNode* obj = empty_obj.node_mut(id).as_object();
  obj->geometry.reset();  // neither payload nor reference
  DirGeometrySink sink(std::filesystem::temp_directory_path(), "unused");
  CHECK_THROWS_AS(from_workspace(empty_obj, &sink), UnexportableGeometry);

  // a node that already has a reference passes through untouched
  Workspace with_ref;
  const NodeId rid = with_ref.insert_object(std::nullopt, PointSet{});
  ObjectNode* robj = with_ref.node_mut(rid).as_object();
  robj->geometry.reset();
  robj->file_ref = "archived.xyz";
  const DpwDocument doc = from_workspace(with_ref);
  CHECK(doc.roots[0].string_property("file") == "archived.xyz");
}

TEST_CASE("archives save and load back with full fidelity") {
  namespace fs = std::filesystem;
  const fs::path dir = fresh_dir("xt_dpw_save");
  gen::Rng rng(20240505);
  const Mat4 pose = gen::random_rigid(rng);
  const PointSet pts = gen::random_points(rng, 20);
  const MotionTrack track = gen::random_track(rng, 4);

  Workspace ws;
  const NodeId top = ws.insert_transform(std::nullopt, pose, "mount");
  ws.insert_object(top, pts, "scan");
  const NodeId motion = ws.insert_motion(top, track, "jaw");
  ws.insert_object(motion, pts, "flap");

  const DpwDocument written = save_dpw(ws, dir / "scene.dpw");
  CHECK(fs::exists(dir / "scene.dpw"));
  CHECK(fs::exists(dir / "scene_geo0.xyz"));
  CHECK(fs::exists(dir / "scene_track0.mot"));
  // the two object nodes hold identical points, so they share one payload
  CHECK(written.roots[0].children[0].string_property("file") == "scene_geo0.xyz");

  const LoadedDpw loaded = load_dpw(dir / "scene.dpw", ResolveMode::Strict);
  CHECK(loaded.warnings.empty());
  const Workspace& ws2 = loaded.ws;
  REQUIRE(ws2.roots().size() == 1);
  const Node& top2 = ws2.node(ws2.roots()[0]);
  CHECK(top2.label == "mount");
  REQUIRE(top2.as_transform() != nullptr);
  CHECK(max_abs_diff(top2.as_transform()->matrix, pose) == 0.0);  // g17 exact
  REQUIRE(top2.children.size() == 2);
  const Node& scan2 = ws2.node(top2.children[0]);
  REQUIRE(scan2.as_object() != nullptr);
  REQUIRE(scan2.as_object()->geometry.has_value());
  CHECK(*scan2.as_object()->geometry == pts);
  const Node& jaw2 = ws2.node(top2.children[1]);
  REQUIRE(jaw2.as_motion() != nullptr);
  REQUIRE(jaw2.as_motion()->track.has_value());
  REQUIRE(jaw2.as_motion()->track->samples().size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(jaw2.as_motion()->track->samples()[i].time == track.samples()[i].time);
    CHECK(max_abs_diff(jaw2.as_motion()->track->samples()[i].pose,
                       track.samples()[i].pose) <= 1e-12);
  }

  // saving the loaded tree again relativizes the now-absolute references
  const DpwDocument again = save_dpw(ws2, dir / "second.dpw");
  CHECK(again.roots[0].children[0].string_property("file") == "scene_geo0.xyz");
  fs::remove_all(dir);
}

TEST_CASE("data-directory environment variable acts as a fallback") {
  namespace fs = std::filesystem;
  const fs::path archive_dir = fresh_dir("xt_dpw_env_a");
  const fs::path data_dir = fresh_dir("xt_dpw_env_d");
  const PointSet pts{{1, 2, 3}, {4, 5, 6}};
  write_xyz_file(data_dir / "far.xyz", pts);
  {
    std::ofstream out(archive_dir / "scene.dpw");
    out << "shell { label \"far\" file \"far.xyz\" }\n";
  }

  ::unsetenv("XFORMTREE_DATA_DIR");
  const LoadedDpw without = load_dpw(archive_dir / "scene.dpw");
  CHECK(without.warnings.size() == 1);

  ::setenv("XFORMTREE_DATA_DIR", data_dir.string().c_str(), 1);
  const LoadedDpw with = load_dpw(archive_dir / "scene.dpw", ResolveMode::Strict);
  ::unsetenv("XFORMTREE_DATA_DIR");
  CHECK(with.warnings.empty());
  const ObjectNode* obj = with.ws.node(with.ws.roots()[0]).as_object();
  REQUIRE(obj != nullptr);
  REQUIRE(obj->geometry.has_value());
  CHECK(*obj->geometry == pts);

  fs::remove_all(archive_dir);
  fs::remove_all(data_dir);
}
