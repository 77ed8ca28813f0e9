#pragma once

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "xformtree/detail/textio.hpp"
#include "xformtree/errors.hpp"
#include "xformtree/geometry_io.hpp"
#include "xformtree/mat4.hpp"
#include "xformtree/motion_track.hpp"
#include "xformtree/tree.hpp"

namespace xformtree {

struct SourceLocation {
  int line = 1;
  int column = 1;
};

/// A property value keeps the syntactic kind it was written with: quoted
/// string, bare number, or bracketed number list.
using PropertyValue = std::variant<std::string, double, std::vector<double>>;

struct DpwProperty {
  std::string key;
  PropertyValue value;
  SourceLocation location{};
};

struct DpwObject {
  std::string object_type;
  std::vector<DpwProperty> properties;  // order as written
  std::vector<DpwObject> children;      // order as written
  SourceLocation location{};

  const DpwProperty* find_property(std::string_view key) const {
    for (const DpwProperty& p : properties)
      if (p.key == key) return &p;
    return nullptr;
  }

  std::optional<std::string> string_property(std::string_view key) const {
    const DpwProperty* p = find_property(key);
    if (!p) return std::nullopt;
    if (const std::string* s = std::get_if<std::string>(&p->value)) return *s;
    return std::nullopt;
  }

  std::string label() const { return string_property("label").value_or(""); }
};

struct DpwDocument {
  std::vector<DpwObject> roots;
};

/// Structural equality ignores source locations; values compare exactly.
inline bool structurally_equal(const PropertyValue& a, const PropertyValue& b) {
  return a == b;
}

inline bool structurally_equal(const DpwObject& a, const DpwObject& b) {
  if (a.object_type != b.object_type) return false;
  if (a.properties.size() != b.properties.size()) return false;
  for (std::size_t i = 0; i < a.properties.size(); ++i) {
    if (a.properties[i].key != b.properties[i].key) return false;
    if (!structurally_equal(a.properties[i].value, b.properties[i].value))
      return false;
  }
  if (a.children.size() != b.children.size()) return false;
  for (std::size_t i = 0; i < a.children.size(); ++i)
    if (!structurally_equal(a.children[i], b.children[i])) return false;
  return true;
}

inline bool structurally_equal(const DpwDocument& a, const DpwDocument& b) {
  if (a.roots.size() != b.roots.size()) return false;
  for (std::size_t i = 0; i < a.roots.size(); ++i)
    if (!structurally_equal(a.roots[i], b.roots[i])) return false;
  return true;
}

namespace detail {

enum class TokKind { Ident, String, Number, LBrace, RBrace, LBracket, RBracket, End };

struct Token {
  TokKind kind = TokKind::End;
  std::string text;      // ident name or unescaped string
  double number = 0.0;
  SourceLocation loc{};
};

class DpwLexer {
 public:
  explicit DpwLexer(std::string_view text) : text_(text) {}

  Token next() {
    skip_blank();
    Token t;
    t.loc = here();
    if (pos_ >= text_.size()) return t;  // End
    const char c = text_[pos_];
    if (c == '{') { advance(); t.kind = TokKind::LBrace; return t; }
    if (c == '}') { advance(); t.kind = TokKind::RBrace; return t; }
    if (c == '[') { advance(); t.kind = TokKind::LBracket; return t; }
    if (c == ']') { advance(); t.kind = TokKind::RBracket; return t; }
    if (c == '"') return lex_string(t);
    if (is_ident_start(c)) return lex_ident(t);
    if (is_number_start(c)) return lex_number(t);
    throw SyntaxError(std::string("unexpected character '") + c + "'", t.loc.line,
                      t.loc.column);
  }

 private:
  SourceLocation here() const { return {line_, col_}; }

  void advance() {
    if (text_[pos_] == '\n') { ++line_; col_ = 1; } else { ++col_; }
    ++pos_;
  }

  void skip_blank() {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == '#') {
        while (pos_ < text_.size() && text_[pos_] != '\n') advance();
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        advance();
      } else {
        break;
      }
    }
  }

  static bool is_ident_start(char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_';
  }
  static bool is_ident_char(char c) {
    return is_ident_start(c) || (c >= '0' && c <= '9');
  }
  static bool is_number_start(char c) {
    return (c >= '0' && c <= '9') || c == '+' || c == '-' || c == '.';
  }

  Token lex_ident(Token t) {
    t.kind = TokKind::Ident;
    while (pos_ < text_.size() && is_ident_char(text_[pos_])) {
      t.text += text_[pos_];
      advance();
    }
    return t;
  }

  Token lex_string(Token t) {
    t.kind = TokKind::String;
    advance();  // opening quote
    while (true) {
      if (pos_ >= text_.size() || text_[pos_] == '\n')
        throw MalformedString("unterminated string literal", t.loc.line,
                              t.loc.column);
      const char c = text_[pos_];
      if (c == '"') { advance(); return t; }
      if (c == '\\') {
        advance();
        if (pos_ >= text_.size())
          throw MalformedString("unterminated string literal", t.loc.line,
                                t.loc.column);
        const char esc = text_[pos_];
        if (esc != '"' && esc != '\\')
          throw SyntaxError(std::string("invalid escape '\\") + esc + "'", line_,
                            col_ - 1);
        t.text += esc;
        advance();
      } else {
        t.text += c;
        advance();
      }
    }
  }

  Token lex_number(Token t) {
    t.kind = TokKind::Number;
    const std::size_t start = pos_;
    if (text_[pos_] == '+' || text_[pos_] == '-') advance();
    std::size_t digits = 0;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      advance();
      ++digits;
    }
    if (pos_ < text_.size() && text_[pos_] == '.') {
      advance();
      while (pos_ < text_.size() &&
             std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        advance();
        ++digits;
      }
    }
    if (digits == 0)
      throw SyntaxError("malformed number", t.loc.line, t.loc.column);
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      advance();
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) advance();
      std::size_t exp_digits = 0;
      while (pos_ < text_.size() &&
             std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        advance();
        ++exp_digits;
      }
      if (exp_digits == 0)
        throw SyntaxError("malformed number exponent", t.loc.line, t.loc.column);
    }
    const std::string slice(text_.substr(start, pos_ - start));
    t.number = std::strtod(slice.c_str(), nullptr);
    return t;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

class DpwParser {
 public:
  explicit DpwParser(std::string_view text) : lexer_(text) { bump(); }

  DpwDocument document() {
    DpwDocument doc;
    while (cur_.kind != TokKind::End) {
      if (cur_.kind == TokKind::RBrace)
        throw UnbalancedBraces("'}' without matching '{'", cur_.loc.line,
                               cur_.loc.column);
      if (cur_.kind != TokKind::Ident)
        throw SyntaxError("expected object type identifier", cur_.loc.line,
                          cur_.loc.column);
      doc.roots.push_back(object());
    }
    return doc;
  }

 private:
  void bump() { cur_ = lexer_.next(); }

  DpwObject object() {
    DpwObject obj;
    obj.object_type = cur_.text;
    obj.location = cur_.loc;
    bump();
    if (cur_.kind != TokKind::LBrace)
      throw SyntaxError("expected '{' after object type '" + obj.object_type + "'",
                        cur_.loc.line, cur_.loc.column);
    parse_body(obj);
    return obj;
  }

  // Expects cur_ to be the '{' of the object whose type is already set.
  void parse_body(DpwObject& obj) {
    const SourceLocation open = cur_.loc;
    bump();  // consume '{'
    while (cur_.kind != TokKind::RBrace) {
      if (cur_.kind == TokKind::End)
        throw UnbalancedBraces("'{' opened here was never closed", open.line,
                               open.column);
      if (cur_.kind != TokKind::Ident)
        throw SyntaxError("expected property name, child object, or '}'",
                          cur_.loc.line, cur_.loc.column);
      const Token name = cur_;
      bump();
      switch (cur_.kind) {
        case TokKind::LBrace: {
          DpwObject child;
          child.object_type = name.text;
          child.location = name.loc;
          parse_body(child);
          obj.children.push_back(std::move(child));
          break;
        }
        case TokKind::String:
          obj.properties.push_back({name.text, cur_.text, name.loc});
          bump();
          break;
        case TokKind::Number:
          obj.properties.push_back({name.text, cur_.number, name.loc});
          bump();
          break;
        case TokKind::LBracket:
          obj.properties.push_back({name.text, number_list(), name.loc});
          break;
        default:
          throw SyntaxError("expected a value or '{' after '" + name.text + "'",
                            cur_.loc.line, cur_.loc.column);
      }
    }
    bump();
    check_object(obj);
  }

  std::vector<double> number_list() {
    const SourceLocation open = cur_.loc;
    bump();  // consume '['
    std::vector<double> values;
    while (cur_.kind != TokKind::RBracket) {
      if (cur_.kind == TokKind::End)
        throw UnbalancedBraces("'[' opened here was never closed", open.line,
                               open.column);
      if (cur_.kind != TokKind::Number)
        throw SyntaxError("expected number or ']' in list", cur_.loc.line,
                          cur_.loc.column);
      values.push_back(cur_.number);
      bump();
    }
    bump();
    return values;
  }

  static void check_object(const DpwObject& obj) {
    if (obj.object_type == "trans") {
      int matrices = 0;
      for (const DpwProperty& p : obj.properties) {
        if (p.key != "matrix") continue;
        ++matrices;
        const auto* list = std::get_if<std::vector<double>>(&p.value);
        if (!list || list->size() != 16)
          throw MalformedMatrix(
              "matrix must be a bracketed list of 16 numbers" +
                  (list ? " (got " + std::to_string(list->size()) + ")" : std::string()),
              p.location.line, p.location.column);
      }
      if (matrices != 1)
        throw MalformedMatrix("trans requires exactly one matrix property (found " +
                                  std::to_string(matrices) + ")",
                              obj.location.line, obj.location.column);
    }
    if (obj.object_type == "shell" || obj.object_type == "volume") {
      int files = 0;
      for (const DpwProperty& p : obj.properties)
        if (p.key == "file") ++files;
      if (files > 1)
        throw SyntaxError(obj.object_type + " carries more than one file property",
                          obj.location.line, obj.location.column);
    }
  }

  DpwLexer lexer_;
  Token cur_;
};

inline std::string escape_dpw_string(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 2);
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

inline void serialize_value(std::string& out, std::size_t value_col,
                            const PropertyValue& value) {
  if (const std::string* s = std::get_if<std::string>(&value)) {
    out += '"';
    out += escape_dpw_string(*s);
    out += '"';
    return;
  }
  if (const double* d = std::get_if<double>(&value)) {
    out += format_g17(*d);
    return;
  }
  const auto& list = std::get<std::vector<double>>(value);
  if (list.empty()) {
    out += "[ ]";
    return;
  }
  if (list.size() == 16) {
    // 4 rows of 4, continuation rows aligned under the first element
    const std::string pad(value_col + 2, ' ');
    out += "[ ";
    for (int r = 0; r < 4; ++r) {
      if (r > 0) out += pad;
      for (int c = 0; c < 4; ++c) {
        out += format_g17(list[static_cast<std::size_t>(r * 4 + c)]);
        out += (c < 3) ? " " : "";
      }
      out += (r < 3) ? "\n" : " ]";
    }
    return;
  }
  out += "[ ";
  for (std::size_t i = 0; i < list.size(); ++i) {
    out += format_g17(list[i]);
    out += ' ';
  }
  out += ']';
}

inline void serialize_object(std::string& out, const DpwObject& obj, int level) {
  const std::string indent(static_cast<std::size_t>(level) * 2, ' ');
  out += indent;
  out += obj.object_type;
  out += " {\n";
  for (const DpwProperty& p : obj.properties) {
    out += indent;
    out += "  ";
    out += p.key;
    out += ' ';
    serialize_value(out, indent.size() + 2 + p.key.size() + 1, p.value);
    out += '\n';
  }
  for (const DpwObject& c : obj.children) serialize_object(out, c, level + 1);
  out += indent;
  out += "}\n";
}

/// Round-trips a PropertyValue through its textual form (used to stash
/// unknown properties in node metadata).
inline std::string value_to_text(const PropertyValue& v) {
  std::string out;
  serialize_value(out, 0, v);
  return out;
}

inline PropertyValue text_to_value(const std::string& text) {
  DpwLexer lex(text);
  Token t = lex.next();
  if (t.kind == TokKind::String) return t.text;
  if (t.kind == TokKind::Number) return t.number;
  if (t.kind == TokKind::LBracket) {
    std::vector<double> list;
    for (t = lex.next(); t.kind == TokKind::Number; t = lex.next())
      list.push_back(t.number);
    return list;
  }
  throw SyntaxError("cannot reconstruct property value from '" + text + "'",
                    t.loc.line, t.loc.column);
}

inline bool is_dpw_identifier(std::string_view s) {
  if (s.empty()) return false;
  if (!(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  return true;
}

}  // namespace detail

inline DpwDocument parse_dpw(std::string_view text) {
  return detail::DpwParser(text).document();
}

inline std::string serialize_dpw(const DpwDocument& doc) {
  std::string out;
  for (const DpwObject& root : doc.roots) detail::serialize_object(out, root, 0);
  return out;
}

inline Mat4 matrix_from_list(const std::vector<double>& list) {
  Mat4 m;
  for (std::size_t i = 0; i < 16; ++i) m.e[i] = list[i];
  return m;
}

inline std::vector<double> list_from_matrix(const Mat4& m) {
  return std::vector<double>(m.e.begin(), m.e.end());
}

// --- filesystem resolution ------------------------------------------------

/// Maps `file` reference strings to filesystem paths. Pure lookup; loading
/// and error reporting happen in to_workspace.
class Resolver {
 public:
  virtual ~Resolver() = default;
  virtual std::optional<std::filesystem::path> locate(const std::string& ref) const = 0;
};

/// Resolves nothing; loads structure only.
class NullResolver : public Resolver {
 public:
  std::optional<std::filesystem::path> locate(const std::string&) const override {
    return std::nullopt;
  }
};

/// Resolves relative references against a primary directory, then an
/// optional fallback (e.g. a shared data root). Absolute references are
/// used as-is when the file exists.
class DirResolver : public Resolver {
 public:
  explicit DirResolver(std::filesystem::path primary,
                       std::filesystem::path fallback = {})
      : primary_(std::move(primary)), fallback_(std::move(fallback)) {}

  std::optional<std::filesystem::path> locate(const std::string& ref) const override {
    namespace fs = std::filesystem;
    if (ref.empty()) return std::nullopt;
    const fs::path p(ref);
    std::error_code ec;
    if (p.is_absolute())
      return fs::exists(p, ec) ? std::optional(p) : std::nullopt;
    if (!primary_.empty() && fs::exists(primary_ / p, ec)) return primary_ / p;
    if (!fallback_.empty() && fs::exists(fallback_ / p, ec)) return fallback_ / p;
    return std::nullopt;
  }

 private:
  std::filesystem::path primary_;
  std::filesystem::path fallback_;
};

enum class ResolveMode { Strict, Lenient };

namespace detail {

inline void convert_object(const DpwObject& obj, std::optional<NodeId> parent,
                           Workspace& ws, const Resolver& resolver,
                           ResolveMode mode, std::vector<std::string>* warnings) {
  const auto warn = [&](const std::string& msg) {
    if (warnings) warnings->push_back(msg);
  };
  const std::string label = obj.label();

  // Known per-type property keys; everything else is preserved in metadata.
  const auto stash_unknown = [&](Metadata& meta,
                                 std::initializer_list<std::string_view> known) {
    for (const DpwProperty& p : obj.properties) {
      bool is_known = p.key == "label";
      for (std::string_view k : known) is_known = is_known || p.key == k;
      if (is_known) continue;
      if (const std::string* s = std::get_if<std::string>(&p.value))
        meta[p.key] = *s;
      else
        meta["dpw:prop:" + p.key] = value_to_text(p.value);
    }
  };

  NodeId id;
  if (obj.object_type == "trans") {
    const DpwProperty* mp = obj.find_property("matrix");
    const auto* list = mp ? std::get_if<std::vector<double>>(&mp->value) : nullptr;
    if (!list || list->size() != 16)
      throw MalformedTransform("trans object needs one 16-number matrix property");
    const Mat4 m = matrix_from_list(*list);
    Metadata meta;
    stash_unknown(meta, {"matrix"});
    if (m.is_affine() && m.is_invertible()) {
      id = ws.insert(parent, TransformNode{m}, label, std::move(meta));
    } else if (mode == ResolveMode::Strict) {
      throw MalformedTransform("trans matrix at line " +
                               std::to_string(obj.location.line) +
                               " is singular or not affine");
    } else {
      // keep the bad matrix so validate() can report it
      id = ws.insert(parent, TransformNode{Mat4::identity()}, label, std::move(meta));
      ws.node_mut(id).payload = TransformNode{m};
      warn("line " + std::to_string(obj.location.line) +
           ": trans matrix is singular or not affine");
    }
  } else if (obj.object_type == "shell" || obj.object_type == "volume") {
    const std::string ref = obj.string_property("file").value_or("");
    ObjectNode node;
    node.dpw_type = obj.object_type;
    node.file_ref = ref;
    if (!ref.empty()) {
      if (auto path = resolver.locate(ref)) {
        node.geometry = read_geometry_file(*path);
        node.file_ref = path->string();
      } else if (mode == ResolveMode::Strict) {
        throw MissingFile("cannot resolve geometry file \"" + ref + "\" (line " +
                          std::to_string(obj.location.line) + ")");
      } else {
        warn("line " + std::to_string(obj.location.line) +
             ": geometry file \"" + ref + "\" not found; keeping reference only");
      }
    }
    Metadata meta;
    stash_unknown(meta, {"file"});
    id = ws.insert(parent, std::move(node), label, std::move(meta));
  } else if (obj.object_type == "motion") {
    const std::string ref = obj.string_property("file").value_or("");
    MotionNode node;
    node.file_ref = ref;
    if (!ref.empty()) {
      if (auto path = resolver.locate(ref)) {
        node.track = read_motion_track_file(*path);
        node.file_ref = path->string();
      } else if (mode == ResolveMode::Strict) {
        throw MissingFile("cannot resolve motion file \"" + ref + "\" (line " +
                          std::to_string(obj.location.line) + ")");
      } else {
        warn("line " + std::to_string(obj.location.line) + ": motion file \"" +
             ref + "\" not found; node contributes identity");
      }
    }
    Metadata meta;
    stash_unknown(meta, {"file"});
    id = ws.insert(parent, std::move(node), label, std::move(meta));
  } else {
    Metadata meta;
    stash_unknown(meta, {});
    if (obj.object_type != "group") {
      meta["dpw_type"] = obj.object_type;
      warn("line " + std::to_string(obj.location.line) + ": unknown object type '" +
           obj.object_type + "' treated as group");
    }
    id = ws.insert(parent, GroupNode{}, label, std::move(meta));
  }

  for (const DpwObject& child : obj.children)
    convert_object(child, id, ws, resolver, mode, warnings);
}

}  // namespace detail

/// Builds a Workspace from a parsed document. In strict mode unresolvable
/// file references and bad matrices throw; in lenient mode they are kept as
/// structure (with warnings collected if a vector is supplied).
inline Workspace to_workspace(const DpwDocument& doc, const Resolver& resolver,
                              ResolveMode mode = ResolveMode::Lenient,
                              std::vector<std::string>* warnings = nullptr) {
  Workspace ws;
  for (const DpwObject& root : doc.roots)
    detail::convert_object(root, std::nullopt, ws, resolver, mode, warnings);
  return ws;
}

// --- geometry export ------------------------------------------------------

/// Receives geometry payloads that exist only in memory and returns the
/// reference string to record. Implementations deduplicate as they see fit.
class GeometrySink {
 public:
  virtual ~GeometrySink() = default;
  virtual std::string store(const PointSet& points) = 0;
  virtual std::string store_track(const MotionTrack& track) = 0;
};

/// Writes payloads beside the target archive as XYZ / .mot files named
/// `<stem>_geo<N>.xyz`, `<stem>_track<N>.mot`. Identical point sets are
/// written once and share one file (content-addressed).
class DirGeometrySink : public GeometrySink {
 public:
  DirGeometrySink(std::filesystem::path directory, std::string stem)
      : dir_(std::move(directory)), stem_(std::move(stem)) {}

  std::string store(const PointSet& points) override {
    const std::uint64_t h = hash_points(points);
    auto [it, inserted] = geo_by_hash_.try_emplace(h);
    for (const auto& [ref, stored] : it->second)
      if (stored == points) return ref;
    const std::string name = stem_ + "_geo" + std::to_string(geo_count_++) + ".xyz";
    write_xyz_file(dir_ / name, points);
    it->second.emplace_back(name, points);
    return name;
  }

  std::string store_track(const MotionTrack& track) override {
    const std::string name =
        stem_ + "_track" + std::to_string(track_count_++) + ".mot";
    write_motion_track_file(dir_ / name, track);
    return name;
  }

 private:
  static std::uint64_t hash_points(const PointSet& points) {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    const auto mix = [&h](std::uint64_t v) {
      for (int i = 0; i < 8; ++i) {
        h ^= (v >> (i * 8)) & 0xff;
        h *= 1099511628211ull;
      }
    };
    const auto mix_double = [&](double d) {
      std::uint64_t bits;
      static_assert(sizeof bits == sizeof d);
      std::memcpy(&bits, &d, sizeof bits);
      mix(bits);
    };
    for (std::size_t i = 0; i < points.size(); ++i) {
      mix_double(points[i].x);
      mix_double(points[i].y);
      mix_double(points[i].z);
      mix(static_cast<std::uint64_t>(points.tag(i)));
    }
    return h;
  }

  std::filesystem::path dir_;
  std::string stem_;
  std::map<std::uint64_t, std::vector<std::pair<std::string, PointSet>>> geo_by_hash_;
  int geo_count_ = 0;
  int track_count_ = 0;
};

namespace detail {

inline DpwObject export_node(const Workspace& ws, NodeId id, GeometrySink* sink) {
  const Node& n = ws.node(id);
  DpwObject obj;

  std::vector<DpwProperty> tail;  // metadata-derived properties
  for (const auto& [key, value] : n.metadata) {
    if (key == "dpw_type") continue;
    if (key.rfind("dpw:prop:", 0) == 0) {
      tail.push_back({key.substr(9), text_to_value(value), {}});
    } else if (is_dpw_identifier(key) && key != "label" && key != "matrix" &&
               key != "file") {
      tail.push_back({key, value, {}});
    }
  }

  if (const TransformNode* t = n.as_transform()) {
    obj.object_type = "trans";
    if (!n.label.empty()) obj.properties.push_back({"label", n.label, {}});
    obj.properties.push_back({"matrix", list_from_matrix(t->matrix), {}});
  } else if (const ObjectNode* o = n.as_object()) {
    obj.object_type = o->dpw_type.empty() ? "shell" : o->dpw_type;
    if (!n.label.empty()) obj.properties.push_back({"label", n.label, {}});
    std::string ref = o->file_ref;
    if (ref.empty()) {
      if (!o->geometry)
        throw UnexportableGeometry("object node #" + std::to_string(id.value) +
                                   " has neither file reference nor geometry");
      if (!sink)
        throw UnexportableGeometry("object node #" + std::to_string(id.value) +
                                   " holds in-memory geometry but no sink was given");
      ref = sink->store(*o->geometry);
    }
    obj.properties.push_back({"file", ref, {}});
  } else if (const MotionNode* m = n.as_motion()) {
    obj.object_type = "motion";
    if (!n.label.empty()) obj.properties.push_back({"label", n.label, {}});
    std::string ref = m->file_ref;
    if (ref.empty() && m->track) {
      if (!sink)
        throw UnexportableGeometry("motion node #" + std::to_string(id.value) +
                                   " holds an in-memory track but no sink was given");
      ref = sink->store_track(*m->track);
    }
    if (!ref.empty()) obj.properties.push_back({"file", ref, {}});
  } else {
    const auto it = n.metadata.find("dpw_type");
    obj.object_type = it != n.metadata.end() ? it->second : "group";
    if (!n.label.empty()) obj.properties.push_back({"label", n.label, {}});
  }

  for (DpwProperty& p : tail) obj.properties.push_back(std::move(p));
  for (NodeId child : n.children)
    obj.children.push_back(export_node(ws, child, sink));
  return obj;
}

}  // namespace detail

/// Serializes the workspace structure. Geometry is stored by reference
/// only: nodes that already carry a file reference are passed through
/// untouched, in-memory payloads go through the sink (required then).
inline DpwDocument from_workspace(const Workspace& ws, GeometrySink* sink = nullptr) {
  DpwDocument doc;
  for (NodeId root : ws.roots())
    doc.roots.push_back(detail::export_node(ws, root, sink));
  return doc;
}

// --- file-level conveniences ----------------------------------------------

struct LoadedDpw {
  Workspace ws;
  DpwDocument doc;
  std::vector<std::string> warnings;
};

/// Parses a `.dpw` file and resolves references against its directory, then
/// against $XFORMTREE_DATA_DIR if set. Resolved references are rewritten to
/// absolute paths so the workspace can be saved elsewhere.
inline LoadedDpw load_dpw(const std::filesystem::path& file,
                          ResolveMode mode = ResolveMode::Lenient) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();

  LoadedDpw out;
  out.doc = parse_dpw(buffer.str());
  std::filesystem::path fallback;
  if (const char* env = std::getenv("XFORMTREE_DATA_DIR")) fallback = env;
  const DirResolver resolver(std::filesystem::absolute(file).parent_path(), fallback);
  out.ws = to_workspace(out.doc, resolver, mode, &out.warnings);
  return out;
}

/// Writes the workspace as a `.dpw` file. References to existing files are
/// relativized against the output directory when possible; in-memory
/// geometry is written beside the archive. Returns the document written.
inline DpwDocument save_dpw(const Workspace& ws, const std::filesystem::path& file) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::absolute(file).parent_path();
  std::error_code ec;
  fs::create_directories(dir, ec);

  Workspace copy = ws;
  const auto relativize = [&](std::string& ref) {
    if (ref.empty()) return;
    const fs::path p(ref);
    if (!p.is_absolute()) return;
    const fs::path rel = p.lexically_proximate(dir);
    if (rel.empty() || rel.native().rfind("..", 0) == 0) return;  // keep absolute
    ref = rel.generic_string();
  };
  for (NodeId id : copy.all_nodes()) {
    Node& n = copy.node_mut(id);
    if (ObjectNode* o = n.as_object()) relativize(o->file_ref);
    if (MotionNode* m = n.as_motion()) relativize(m->file_ref);
  }

  DirGeometrySink sink(dir, file.stem().string());
  const DpwDocument doc = from_workspace(copy, &sink);
  std::ofstream outf(file);
  if (!outf) throw IoError("cannot write " + file.string());
  outf << serialize_dpw(doc);
  if (!outf.good()) throw IoError("failed writing " + file.string());
  return doc;
}

}  // namespace xformtree
