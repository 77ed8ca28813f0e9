// xformtree: command-line front end for transformation-tree archives.
//
// Subcommands: info, validate, express, reparent, register, animate, chain.
// Exit codes: 0 success, 1 domain/usage error, 2 parse or I/O error.

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "xformtree/xformtree.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace xformtree;

namespace {

std::string timestamp_now() {
  if (const char* fixed = std::getenv("XFORMTREE_TIMESTAMP")) return fixed;
  std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

std::string join_args(int argc, char** argv) {
  std::string out;
  for (int i = 0; i < argc; ++i) {
    if (i) out += ' ';
    out += argv[i];
  }
  return out;
}

std::string g_command_line;

void stamp_provenance(Workspace& ws, NodeId id) {
  Node& n = ws.node_mut(id);
  n.metadata["provenance_command"] = g_command_line;
  n.metadata["provenance_timestamp"] = timestamp_now();
}

/// `#<id>` or an exact, unique label.
NodeId resolve_selector(const Workspace& ws, const std::string& selector) {
  if (!selector.empty() && selector[0] == '#') {
    char* end = nullptr;
    const long long v = std::strtoll(selector.c_str() + 1, &end, 10);
    if (end == selector.c_str() + 1 || *end != '\0')
      throw InvalidArgument("bad node selector '" + selector + "'");
    const NodeId id{v};
    if (!ws.contains(id))
      throw UnknownNode("node " + selector + " does not exist");
    return id;
  }
  std::vector<NodeId> matches;
  for (NodeId id : ws.all_nodes())
    if (ws.node(id).label == selector) matches.push_back(id);
  if (matches.empty())
    throw UnknownNode("no node labeled \"" + selector + "\"");
  if (matches.size() > 1)
    throw AmbiguousSelector("label \"" + selector + "\" matches " +
                            std::to_string(matches.size()) +
                            " nodes; use #<id>");
  return matches.front();
}

/// `start:step:end` (inclusive) or a comma-separated list.
std::vector<double> parse_times(const std::string& spec) {
  const auto parse_num = [&](const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size())
      throw BadTimesSpec("bad number '" + s + "' in times spec '" + spec + "'");
    return v;
  };
  std::vector<double> out;
  if (spec.find(':') != std::string::npos) {
    const auto c1 = spec.find(':');
    const auto c2 = spec.find(':', c1 + 1);
    if (c2 == std::string::npos || spec.find(':', c2 + 1) != std::string::npos)
      throw BadTimesSpec("times spec must be start:step:end, got '" + spec + "'");
    const double start = parse_num(spec.substr(0, c1));
    const double step = parse_num(spec.substr(c1 + 1, c2 - c1 - 1));
    const double end = parse_num(spec.substr(c2 + 1));
    if (step <= 0.0) throw BadTimesSpec("times step must be positive");
    if (end < start) throw BadTimesSpec("times end before start");
    const auto count = static_cast<std::size_t>((end - start) / step + 1e-9) + 1;
    for (std::size_t i = 0; i < count; ++i)
      out.push_back(start + static_cast<double>(i) * step);
    return out;
  }
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    const auto comma = spec.find(',', pos);
    const std::string item =
        spec.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    out.push_back(parse_num(item));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.empty()) throw BadTimesSpec("empty times spec");
  return out;
}

Mat4 parse_matrix_csv(const std::string& text) {
  std::vector<double> values;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const std::string item =
        text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (item.empty() || end != item.c_str() + item.size())
      throw InvalidArgument("bad matrix element '" + item + "'");
    values.push_back(v);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (values.size() != 16)
    throw InvalidArgument("--init needs 16 comma-separated numbers, got " +
                          std::to_string(values.size()));
  return matrix_from_list(values);
}

json matrix_json(const Mat4& m) {
  json rows = json::array();
  for (int r = 0; r < 4; ++r) {
    json row = json::array();
    for (int c = 0; c < 4; ++c) row.push_back(m.at(r, c));
    rows.push_back(row);
  }
  return rows;
}

json params_json(const IcpParams& p) {
  return {{"max_iterations", p.max_iterations},
          {"convergence_rms_delta", p.convergence_rms_delta},
          {"max_correspondence_distance", p.max_correspondence_distance},
          {"allow_scale", p.allow_scale}};
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out.good()) throw IoError("failed writing " + path.string());
}

PointSet flatten_all(const Workspace& ws) {
  PointSet all;
  for (NodeId root : ws.roots()) all.append(ws.flatten(root));
  return all;
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const std::string& w : warnings) std::cerr << "warning: " << w << '\n';
}

enum class OutFormat { Dpw, Xyz, JsonReport };

OutFormat parse_format(const std::string& f) {
  if (f == "dpw") return OutFormat::Dpw;
  if (f == "xyz") return OutFormat::Xyz;
  if (f == "json-report") return OutFormat::JsonReport;
  throw InvalidArgument("unknown format '" + f + "'");
}

/// Writes the primary output of a mutating command plus, when asked, the
/// JSON report. In dpw mode the report (if any) becomes a `.report.json`
/// sidecar next to the archive.
void emit_output(const Workspace& ws, const fs::path& out, OutFormat format,
                 const json* report) {
  switch (format) {
    case OutFormat::Dpw:
      save_dpw(ws, out);
      if (report) write_json_file(out.string() + ".report.json", *report);
      break;
    case OutFormat::Xyz:
      write_xyz_file(out, flatten_all(ws));
      break;
    case OutFormat::JsonReport: {
      json j = report ? *report : json::object();
      j["command_line"] = g_command_line;
      write_json_file(out, j);
      break;
    }
  }
}

int depth_of(const Workspace& ws, NodeId id) {
  int d = 0;
  std::optional<NodeId> cur = ws.node(id).parent;
  while (cur) {
    ++d;
    cur = ws.node(*cur).parent;
  }
  return d;
}

const char* kind_name(const Node& n) {
  if (n.is_transform()) return "trans";
  if (n.is_group()) return "group";
  if (n.is_motion()) return "motion";
  const ObjectNode* o = n.as_object();
  return o && o->dpw_type == "volume" ? "volume" : "shell";
}

int cmd_info(const std::string& file, bool strict) {
  const LoadedDpw loaded =
      load_dpw(file, strict ? ResolveMode::Strict : ResolveMode::Lenient);
  print_warnings(loaded.warnings);
  const Workspace& ws = loaded.ws;

  std::printf("%6s  %-7s  %-28s  %5s  %12s  %8s\n", "id", "type", "label", "depth",
              "cum.det", "children");
  for (NodeId id : ws.all_nodes()) {
    const Node& n = ws.node(id);
    std::string label = n.label;
    if (label.size() > 28) label = label.substr(0, 25) + "...";
    std::printf("%5s%lld  %-7s  %-28s  %5d  %12.6g  %8zu\n", "#",
                static_cast<long long>(id.value), kind_name(n), label.c_str(),
                depth_of(ws, id), ws.cumulative_transform(id).det3(),
                n.children.size());
  }
  std::printf("\n");
  for (NodeId root : ws.roots()) {
    const std::vector<NodeId> nodes = ws.preorder(root);
    std::size_t objects = 0;
    int max_depth = 0;
    for (NodeId id : nodes) {
      if (ws.node(id).is_object()) ++objects;
      max_depth = std::max(max_depth, depth_of(ws, id));
    }
    std::printf("model #%lld: %zu nodes, %zu objects, max depth %d\n",
                static_cast<long long>(root.value), nodes.size(), objects,
                max_depth);
  }
  return 0;
}

int cmd_validate(const std::string& file, bool strict) {
  const LoadedDpw loaded =
      load_dpw(file, strict ? ResolveMode::Strict : ResolveMode::Lenient);
  print_warnings(loaded.warnings);
  const std::vector<Diagnostic> diags = loaded.ws.validate();
  for (const Diagnostic& d : diags)
    std::printf("node #%lld: %s - %s\n", static_cast<long long>(d.node.value),
                to_string(d.kind), d.detail.c_str());
  if (diags.empty()) {
    std::printf("ok: %zu nodes, no diagnostics\n", loaded.ws.size());
    return 0;
  }
  return 1;
}

int cmd_express(const std::string& file, const std::string& selector,
                const std::string& out, bool strict, OutFormat format) {
  LoadedDpw loaded =
      load_dpw(file, strict ? ResolveMode::Strict : ResolveMode::Lenient);
  print_warnings(loaded.warnings);
  const NodeId frame = resolve_selector(loaded.ws, selector);
  Workspace result = loaded.ws.express_in(frame);
  for (NodeId root : result.roots()) {
    stamp_provenance(result, root);
    result.node_mut(root).label = "frame change";
  }
  json report = {{"command", "express"},
                 {"frame", selector},
                 {"frame_id", frame.value},
                 {"input", file},
                 {"timestamp", timestamp_now()}};
  emit_output(result, out, format, &report);
  return 0;
}

int cmd_reparent(const std::string& file, const std::string& node_sel,
                 const std::string& parent_sel, const std::string& out,
                 bool strict, OutFormat format) {
  LoadedDpw loaded =
      load_dpw(file, strict ? ResolveMode::Strict : ResolveMode::Lenient);
  print_warnings(loaded.warnings);
  Workspace& ws = loaded.ws;
  const NodeId node = resolve_selector(ws, node_sel);
  const NodeId parent = resolve_selector(ws, parent_sel);
  const ReparentResult r = ws.reparent(node, parent);
  stamp_provenance(ws, r.compensation_node);
  ws.node_mut(r.compensation_node).label = "compensation";
  json report = {{"command", "reparent"},
                 {"node", node_sel},
                 {"new_parent", parent_sel},
                 {"compensation", matrix_json(r.compensation)},
                 {"input", file},
                 {"timestamp", timestamp_now()}};
  emit_output(ws, out, format, &report);
  return 0;
}

int cmd_register(const std::string& file, const std::string& src_sel,
                 const std::string& dst_sel, const std::string& method,
                 const IcpParams& params, const Mat4& init, const std::string& out,
                 bool strict, OutFormat format) {
  LoadedDpw loaded =
      load_dpw(file, strict ? ResolveMode::Strict : ResolveMode::Lenient);
  print_warnings(loaded.warnings);
  Workspace& ws = loaded.ws;
  const NodeId src = resolve_selector(ws, src_sel);
  const NodeId dst = resolve_selector(ws, dst_sel);

  RegisterMethod m = RegisterMethod::LeastSquares;
  if (method == "icp") m = RegisterMethod::Icp;
  if (method == "coarse-fine") m = RegisterMethod::CoarseFine;

  const NodeRegistration reg = register_nodes(ws, src, dst, m, params, init);
  stamp_provenance(ws, reg.compensation_node);
  for (NodeId id : reg.recorded) stamp_provenance(ws, id);

  json report = {{"command", "register"},
                 {"method", method},
                 {"params", params_json(params)},
                 {"src", src_sel},
                 {"dst", dst_sel},
                 {"residual_rms", reg.result.residual_rms},
                 {"iterations", reg.result.iterations},
                 {"converged", reg.result.converged},
                 {"transform", matrix_json(reg.result.transform)},
                 {"moved_group", reg.group.value},
                 {"input", file},
                 {"timestamp", timestamp_now()}};
  emit_output(ws, out, format, &report);
  std::printf("registered %s -> %s: residual_rms %.6g, %d iteration(s)\n",
              src_sel.c_str(), dst_sel.c_str(), reg.result.residual_rms,
              reg.result.iterations);
  return 0;
}

int cmd_animate(const std::string& file, const std::string& node_sel,
                const std::string& times_spec, const std::string& outdir,
                bool strict) {
  const LoadedDpw loaded =
      load_dpw(file, strict ? ResolveMode::Strict : ResolveMode::Lenient);
  print_warnings(loaded.warnings);
  const NodeId node = resolve_selector(loaded.ws, node_sel);
  const std::vector<double> times = parse_times(times_spec);
  const std::vector<AnimationFrame> frames =
      export_animation(loaded.ws, node, times);
  const fs::path manifest = write_animation_frames(frames, outdir);
  std::printf("wrote %zu frame(s) to %s (manifest %s)\n", frames.size(),
              outdir.c_str(), manifest.filename().string().c_str());
  return 0;
}

int cmd_chain(const std::vector<std::string>& scan_files, const IcpParams& params,
              const std::string& out, OutFormat format) {
  if (scan_files.size() < 2)
    throw InvalidArgument("chain needs at least two scan files, got " +
                          std::to_string(scan_files.size()));
  std::vector<PointSet> scans;
  scans.reserve(scan_files.size());
  for (const std::string& f : scan_files) scans.push_back(read_geometry_file(f));

  Workspace ws = chain_register(scans, params);
  json pairs = json::array();
  for (NodeId id : ws.all_nodes()) {
    Node& n = ws.node_mut(id);
    if (!n.is_transform()) continue;
    stamp_provenance(ws, id);
    const auto it = n.metadata.find("pair_index");
    if (it == n.metadata.end()) continue;
    pairs.push_back({{"index", std::stoi(it->second)},
                     {"residual_rms", std::stod(n.metadata.at("pair_residual_rms"))},
                     {"iterations", std::stoi(n.metadata.at("pair_iterations"))}});
  }
  json report = {{"command", "chain"},
                 {"scans", scan_files},
                 {"params", params_json(params)},
                 {"pairs", pairs},
                 {"timestamp", timestamp_now()}};
  emit_output(ws, out, format, &report);
  std::printf("chained %zu scans into %s\n", scans.size(), out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  g_command_line = join_args(argc, argv);

  CLI::App app{"transformation-tree toolkit for .dpw archives"};
  app.require_subcommand(1);

  struct {
    std::string file, node, parent, src, dst, out, times, format = "dpw";
    std::string method = "lsq", init;
    std::vector<std::string> scans;
    bool strict = false;
    IcpParams params;
  } opt;

  const auto add_strict = [&](CLI::App* cmd) {
    cmd->add_flag("--strict,!--lenient", opt.strict,
                  "fail when referenced files cannot be resolved");
  };
  const auto add_icp_params = [&](CLI::App* cmd) {
    cmd->add_option("--max-iter", opt.params.max_iterations, "ICP iteration cap");
    cmd->add_option("--tol", opt.params.convergence_rms_delta,
                    "ICP convergence threshold on RMS delta (mm)");
    cmd->add_option("--gate", opt.params.max_correspondence_distance,
                    "nearest-neighbor distance gate (mm)");
    cmd->add_flag("--scale", opt.params.allow_scale,
                  "estimate a uniform scale factor");
  };
  const auto add_format = [&](CLI::App* cmd) {
    cmd->add_option("--format", opt.format, "output kind")
        ->check(CLI::IsMember({"dpw", "xyz", "json-report"}));
  };

  CLI::App* info = app.add_subcommand("info", "print the node table of an archive");
  info->add_option("file", opt.file, "input .dpw")->required();
  add_strict(info);

  CLI::App* validate =
      app.add_subcommand("validate", "check archive structure, exit 1 on findings");
  validate->add_option("file", opt.file, "input .dpw")->required();
  add_strict(validate);

  CLI::App* express =
      app.add_subcommand("express", "re-express the workspace in a node's frame");
  express->add_option("file", opt.file, "input .dpw")->required();
  express->add_option("frame", opt.node, "frame node: #<id> or unique label")
      ->required();
  express->add_option("--out", opt.out, "output path")->required();
  add_strict(express);
  add_format(express);

  CLI::App* reparent =
      app.add_subcommand("reparent", "move a node, preserving world poses");
  reparent->add_option("file", opt.file, "input .dpw")->required();
  reparent->add_option("node", opt.node, "node to move")->required();
  reparent->add_option("new-parent", opt.parent, "destination node")->required();
  reparent->add_option("--out", opt.out, "output path")->required();
  add_strict(reparent);
  add_format(reparent);

  CLI::App* reg = app.add_subcommand(
      "register", "register one node's geometry onto another, move its group");
  reg->add_option("file", opt.file, "input .dpw")->required();
  reg->add_option("src", opt.src, "source node")->required();
  reg->add_option("dst", opt.dst, "destination node")->required();
  reg->add_option("--method", opt.method, "registration method")
      ->check(CLI::IsMember({"lsq", "icp", "coarse-fine"}));
  reg->add_option("--init", opt.init,
                  "initial/rough transform, 16 comma-separated numbers");
  reg->add_option("--out", opt.out, "output path")->required();
  add_strict(reg);
  add_icp_params(reg);
  add_format(reg);

  CLI::App* animate =
      app.add_subcommand("animate", "export a subtree as per-time XYZ frames");
  animate->add_option("file", opt.file, "input .dpw")->required();
  animate->add_option("node", opt.node, "subtree to export")->required();
  animate->add_option("times", opt.times, "start:step:end or t1,t2,...")->required();
  animate->add_option("--out", opt.out, "output directory")->required();
  add_strict(animate);

  CLI::App* chain =
      app.add_subcommand("chain", "register a scan sequence pairwise into one tree");
  chain->add_option("scans", opt.scans, "two or more scan files (xyz/obj)");
  chain->add_option("--out", opt.out, "output path")->required();
  add_icp_params(chain);
  add_format(chain);

  int rc = 0;
  info->callback([&] { rc = cmd_info(opt.file, opt.strict); });
  validate->callback([&] { rc = cmd_validate(opt.file, opt.strict); });
  express->callback([&] {
    rc = cmd_express(opt.file, opt.node, opt.out, opt.strict,
                     parse_format(opt.format));
  });
  reparent->callback([&] {
    rc = cmd_reparent(opt.file, opt.node, opt.parent, opt.out, opt.strict,
                      parse_format(opt.format));
  });
  reg->callback([&] {
    const Mat4 init = opt.init.empty() ? Mat4::identity() : parse_matrix_csv(opt.init);
    rc = cmd_register(opt.file, opt.src, opt.dst, opt.method, opt.params, init,
                      opt.out, opt.strict, parse_format(opt.format));
  });
  animate->callback(
      [&] { rc = cmd_animate(opt.file, opt.node, opt.times, opt.out, opt.strict); });
  chain->callback([&] {
    rc = cmd_chain(opt.scans, opt.params, opt.out, parse_format(opt.format));
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const MissingFile& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return rc;
}
