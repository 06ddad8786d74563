#include "tlr/javastruct.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <map>
#include <sstream>
#include <unordered_set>

namespace tlr::java {

std::string_view to_string(Component c) {
  switch (c) {
    case Component::ClassAttribute: return "class_attribute";
    case Component::ClassComment: return "class_comment";
    case Component::ClassName: return "class_name";
    case Component::MethodComment: return "method_comment";
    case Component::MethodName: return "method_name";
    case Component::MethodParameter: return "method_parameter";
    case Component::MethodReturn: return "method_return";
  }
  return "unknown";
}

std::string_view to_string(DependencyKind kind) {
  switch (kind) {
    case DependencyKind::Import: return "import";
    case DependencyKind::Extend: return "extend";
    case DependencyKind::Call: return "call";
  }
  return "unknown";
}

const std::vector<std::string>& CodeStructure::component(Component c) const {
  switch (c) {
    case Component::ClassAttribute: return class_attributes;
    case Component::ClassComment: return class_comments;
    case Component::ClassName: return class_names;
    case Component::MethodComment: return method_comments;
    case Component::MethodName: return method_names;
    case Component::MethodParameter: return method_parameters;
    case Component::MethodReturn: return method_returns;
  }
  return class_names;
}

namespace {

enum class Kind { Ident, Punct, Comment, Literal, End };

struct Token {
  Kind kind = Kind::End;
  std::string text;
  bool line_comment = false;
};

bool ident_start(unsigned char c) { return std::isalpha(c) || c == '_' || c == '$' || c >= 0x80; }
bool ident_part(unsigned char c) { return ident_start(c) || std::isdigit(c); }

std::vector<Token> lex(std::string_view src) {
  std::vector<Token> out;
  std::size_t i = 0;
  const std::size_t n = src.size();
  while (i < n) {
    const auto c = static_cast<unsigned char>(src[i]);
    if (std::isspace(c)) {
      ++i;
    } else if (c == '/' && i + 1 < n && src[i + 1] == '/') {
      std::size_t j = src.find('\n', i);
      if (j == std::string_view::npos) j = n;
      out.push_back({Kind::Comment, std::string(src.substr(i + 2, j - i - 2)), true});
      i = j;
    } else if (c == '/' && i + 1 < n && src[i + 1] == '*') {
      std::size_t j = src.find("*/", i + 2);
      const std::size_t body_end = j == std::string_view::npos ? n : j;
      out.push_back({Kind::Comment, std::string(src.substr(i + 2, body_end - i - 2)), false});
      i = j == std::string_view::npos ? n : j + 2;
    } else if (c == '"' && src.substr(i, 3) == "\"\"\"") {
      std::size_t j = src.find("\"\"\"", i + 3);
      i = j == std::string_view::npos ? n : j + 3;
      out.push_back({Kind::Literal, "\"\"", false});
    } else if (c == '"' || c == '\'') {
      std::size_t j = i + 1;
      while (j < n && src[j] != static_cast<char>(c) && src[j] != '\n') {
        j += (src[j] == '\\') ? 2 : 1;
      }
      i = std::min(n, j + 1);
      out.push_back({Kind::Literal, c == '"' ? "\"\"" : "''", false});
    } else if (ident_start(c)) {
      std::size_t j = i + 1;
      while (j < n && ident_part(static_cast<unsigned char>(src[j]))) ++j;
      out.push_back({Kind::Ident, std::string(src.substr(i, j - i)), false});
      i = j;
    } else if (std::isdigit(c)) {
      std::size_t j = i + 1;
      while (j < n && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '.' || src[j] == '_')) ++j;
      out.push_back({Kind::Literal, std::string(src.substr(i, j - i)), false});
      i = j;
    } else {
      out.push_back({Kind::Punct, std::string(1, static_cast<char>(c)), false});
      ++i;
    }
  }
  return out;
}

std::string clean_comment(std::string_view raw) {
  std::string text(raw);
  if (!text.empty() && text.front() == '*') text.erase(0, 1);  // the second '*' of "/**"
  std::istringstream in(text);
  std::string line;
  std::string joined;
  while (std::getline(in, line)) {
    std::size_t p = line.find_first_not_of(" \t\r");
    if (p == std::string::npos) continue;
    while (p < line.size() && line[p] == '*') ++p;
    std::string rest = line.substr(p);
    std::istringstream words(rest);
    std::string w;
    while (words >> w) {
      if (!joined.empty()) joined += ' ';
      joined += w;
    }
  }
  return joined;
}

const std::unordered_set<std::string>& modifiers() {
  static const std::unordered_set<std::string> m = {
      "public",   "private",   "protected",    "static",    "final",   "abstract",
      "native",   "transient", "volatile",     "strictfp",  "default", "sealed",
      "synchronized", "non"};
  return m;
}

const std::unordered_set<std::string>& non_call_keywords() {
  static const std::unordered_set<std::string> k = {
      "if",   "for",   "while", "switch", "catch", "synchronized", "return", "new",
      "super", "this", "throw", "assert", "else",  "try",          "do",     "case",
      "yield", "instanceof"};
  return k;
}

bool is_type_keyword(const std::string& s) {
  return s == "class" || s == "interface" || s == "enum" || s == "record";
}

class Scanner {
 public:
  Scanner(std::vector<Token> tokens, CodeStructure& out) : toks_(std::move(tokens)), out_(out) {}

  void run() {
    std::string pending;
    bool pending_line = false;
    while (!at_end()) {
      const Token& t = peek();
      if (t.kind == Kind::Comment) {
        take_comment(pending, pending_line);
        continue;
      }
      if (is_ident("import")) {
        advance();
        parse_import();
        pending.clear();
      } else if (is_ident("package")) {
        skip_past(";");
        pending.clear();
      } else if (is_punct("@")) {
        if (peek(1).kind == Kind::Ident && peek(1).text == "interface") {
          advance();
          parse_type_decl(pending, false);
          pending.clear();
        } else {
          skip_annotation();
        }
      } else if (t.kind == Kind::Ident && is_type_keyword(t.text) && !prev_is_dot()) {
        parse_type_decl(pending, t.text == "enum");
        pending.clear();
      } else if (t.kind == Kind::Ident && modifiers().count(t.text) != 0) {
        advance();
      } else {
        advance();
        pending.clear();
      }
    }
  }

 private:
  // --- token cursor -------------------------------------------------------
  bool at_end() const { return pos_ >= toks_.size(); }
  const Token& peek(std::size_t ahead = 0) const {
    static const Token end{};
    return pos_ + ahead < toks_.size() ? toks_[pos_ + ahead] : end;
  }
  void advance() {
    if (!at_end()) ++pos_;
  }
  bool is_punct(std::string_view p, std::size_t ahead = 0) const {
    const Token& t = peek(ahead);
    return t.kind == Kind::Punct && t.text == p;
  }
  bool is_ident(std::string_view s) const { return peek().kind == Kind::Ident && peek().text == s; }
  bool prev_is_dot() const {
    for (std::size_t k = pos_; k-- > 0;) {
      if (toks_[k].kind == Kind::Comment) continue;
      return toks_[k].kind == Kind::Punct && toks_[k].text == ".";
    }
    return false;
  }
  // Index of the next non-comment token at or after `from`.
  std::size_t next_code(std::size_t from) const {
    while (from < toks_.size() && toks_[from].kind == Kind::Comment) ++from;
    return from;
  }

  void warn(const std::string& message) { out_.warnings.push_back(message); }

  void take_comment(std::string& pending, bool& pending_line) {
    const Token& t = peek();
    std::string text = clean_comment(t.text);
    if (t.line_comment && pending_line && !pending.empty()) {
      if (!text.empty()) pending += " " + text;
    } else {
      pending = text;
    }
    pending_line = t.line_comment;
    advance();
  }

  void skip_past(std::string_view punct) {
    while (!at_end() && !is_punct(punct)) advance();
    advance();
  }

  // Skips a balanced (open ... close) group starting at the current token.
  void skip_balanced(std::string_view open, std::string_view close) {
    int depth = 0;
    while (!at_end()) {
      if (is_punct(open)) ++depth;
      if (is_punct(close)) {
        --depth;
        if (depth <= 0) {
          advance();
          return;
        }
      }
      advance();
    }
  }

  void skip_annotation() {
    advance();  // '@'
    while (!at_end() && (peek().kind == Kind::Ident || is_punct("."))) advance();
    if (is_punct("(")) skip_balanced("(", ")");
  }

  void push_unique(std::vector<std::string>& list, const std::string& value) {
    if (std::find(list.begin(), list.end(), value) == list.end()) list.push_back(value);
  }

  void parse_import() {
    std::string name;
    if (is_ident("static")) advance();
    while (!at_end() && !is_punct(";")) {
      const Token& t = peek();
      if (t.kind == Kind::Ident || is_punct(".") || is_punct("*")) {
        name += t.text;
      } else if (t.kind != Kind::Comment) {
        break;
      }
      advance();
    }
    if (is_punct(";")) advance();
    if (!name.empty()) {
      push_unique(out_.imports, name);
    } else {
      warn("empty import statement");
    }
  }

  // Current token is class/interface/enum/record.
  void parse_type_decl(const std::string& comment, bool is_enum) {
    advance();
    std::size_t k = next_code(pos_);
    pos_ = k;
    if (at_end() || peek().kind != Kind::Ident) {
      warn("type declaration without a name");
      return;
    }
    out_.class_names.push_back(peek().text);
    if (!comment.empty()) out_.class_comments.push_back(comment);
    advance();

    bool collecting = false;
    int angle = 0;
    std::string last_ident;
    auto flush = [&]() {
      if (!last_ident.empty()) push_unique(out_.extends_targets, last_ident);
      last_ident.clear();
    };
    while (!at_end() && !is_punct("{")) {
      const Token& t = peek();
      if (is_punct(";")) {
        advance();
        return;
      }
      if (is_punct("<")) {
        ++angle;
      } else if (is_punct(">")) {
        angle = std::max(0, angle - 1);
      } else if (is_punct("(") && angle == 0) {
        skip_balanced("(", ")");
        continue;
      } else if (is_punct("@")) {
        skip_annotation();
        continue;
      } else if (t.kind == Kind::Ident && angle == 0) {
        if (t.text == "extends" || t.text == "implements") {
          flush();
          collecting = true;
        } else if (t.text == "permits" || t.text == "throws") {
          flush();
          collecting = false;
        } else if (collecting) {
          last_ident = t.text;  // qualified names keep their final segment
        }
      } else if (is_punct(",") && angle == 0 && collecting) {
        flush();
      }
      advance();
    }
    if (collecting) flush();
    if (at_end()) {
      warn("unexpected end of file in type header");
      return;
    }
    parse_class_body(is_enum);
  }

  // Current token is the '{' opening a type body.
  void parse_class_body(bool is_enum) {
    advance();
    if (is_enum) skip_enum_constants();
    std::string pending;
    bool pending_line = false;
    while (!at_end()) {
      const Token& t = peek();
      if (t.kind == Kind::Comment) {
        take_comment(pending, pending_line);
        continue;
      }
      if (is_punct("}")) {
        advance();
        return;
      }
      if (is_punct(";")) {
        advance();
        pending.clear();
        continue;
      }
      if (is_punct("{")) {
        parse_code_block();
        pending.clear();
        continue;
      }
      if (is_punct("@")) {
        if (peek(1).kind == Kind::Ident && peek(1).text == "interface") {
          advance();
          parse_type_decl(pending, false);
          pending.clear();
        } else {
          skip_annotation();
        }
        continue;
      }
      if (t.kind == Kind::Ident && modifiers().count(t.text) != 0) {
        advance();
        if (is_punct("-")) {  // non-sealed
          advance();
          advance();
        }
        continue;
      }
      if (t.kind == Kind::Ident && is_type_keyword(t.text)) {
        parse_type_decl(pending, t.text == "enum");
        pending.clear();
        continue;
      }
      parse_member(pending);
      pending.clear();
    }
    warn("unexpected end of file inside a type body");
  }

  void skip_enum_constants() {
    int depth = 0;
    while (!at_end()) {
      if (depth == 0 && is_punct(";")) {
        advance();
        return;
      }
      if (depth == 0 && is_punct("}")) return;  // body ends with no members
      if (is_punct("(") || is_punct("{")) ++depth;
      if (is_punct(")") || is_punct("}")) --depth;
      if (peek().kind == Kind::Ident && is_punct("(", 1) && depth > 0) {
        if (non_call_keywords().count(peek().text) == 0) push_unique(out_.called_names, peek().text);
      }
      advance();
    }
  }

  // Field or method declaration at type-body level.
  void parse_member(const std::string& comment) {
    std::vector<const Token*> header;
    int angle = 0;
    while (!at_end()) {
      const Token& t = peek();
      if (t.kind == Kind::Comment) {
        advance();
        continue;
      }
      if (t.kind == Kind::Punct) {
        if (t.text == "<") ++angle;
        if (t.text == ">") angle = std::max(0, angle - 1);
        if (angle == 0 && t.text == "(") {
          parse_method(header, comment);
          return;
        }
        if (angle == 0 && (t.text == "=" || t.text == ";" || t.text == ",")) {
          parse_field(header);
          return;
        }
        if (t.text == "{" || t.text == "}") {
          warn("unrecognized member near '" + t.text + "'");
          if (t.text == "{") parse_code_block();
          return;
        }
      }
      if (t.kind == Kind::Punct && t.text == "@") {
        skip_annotation();
        continue;
      }
      header.push_back(&t);
      advance();
    }
  }

  static std::string join_type(const std::vector<const Token*>& tokens, std::size_t from, std::size_t to) {
    std::string s;
    for (std::size_t i = from; i < to; ++i) {
      const auto& text = tokens[i]->text;
      if (!s.empty() && tokens[i]->kind == Kind::Ident && tokens[i - 1]->kind == Kind::Ident) s += ' ';
      if (text == "," ) {
        s += ", ";
        continue;
      }
      s += text;
    }
    return s;
  }

  // Current token is '(' after the method name.
  void parse_method(const std::vector<const Token*>& header, const std::string& comment) {
    std::size_t name_idx = header.size();
    for (std::size_t i = header.size(); i-- > 0;) {
      if (header[i]->kind == Kind::Ident) {
        name_idx = i;
        break;
      }
    }
    if (name_idx == header.size()) {
      warn("method without a name");
      skip_balanced("(", ")");
      finish_method();
      return;
    }
    std::size_t type_start = 0;
    if (!header.empty() && header[0]->kind == Kind::Punct && header[0]->text == "<") {
      int depth = 0;
      for (; type_start < name_idx; ++type_start) {
        if (header[type_start]->text == "<") ++depth;
        if (header[type_start]->text == ">" && --depth == 0) {
          ++type_start;
          break;
        }
      }
    }
    out_.method_names.push_back(header[name_idx]->text);
    if (!comment.empty()) out_.method_comments.push_back(comment);
    if (type_start < name_idx) out_.method_returns.push_back(join_type(header, type_start, name_idx));

    parse_parameters();
    finish_method();
  }

  // Current token is '('.
  void parse_parameters() {
    advance();
    std::vector<const Token*> param;
    int paren = 0;
    int angle = 0;
    auto emit = [&]() {
      std::string name;
      std::string type;
      std::size_t name_idx = param.size();
      for (std::size_t i = param.size(); i-- > 0;) {
        if (param[i]->kind == Kind::Ident) {
          name_idx = i;
          name = param[i]->text;
          break;
        }
      }
      int depth = 0;
      for (std::size_t i = 0; i < name_idx; ++i) {
        const auto& tx = param[i]->text;
        if (tx == "<") ++depth;
        if (tx == ">") depth = std::max(0, depth - 1);
        if (depth == 0 && param[i]->kind == Kind::Ident && tx != "final") type = tx;
      }
      if (!name.empty()) out_.method_parameters.push_back(type.empty() ? name : type + " " + name);
      param.clear();
    };
    while (!at_end()) {
      const Token& t = peek();
      if (t.kind == Kind::Comment) {
        advance();
        continue;
      }
      if (is_punct("@")) {
        skip_annotation();
        continue;
      }
      if (t.kind == Kind::Punct) {
        if (t.text == "(") ++paren;
        if (t.text == "<") ++angle;
        if (t.text == ">") angle = std::max(0, angle - 1);
        if (t.text == ")") {
          if (paren == 0) {
            emit();
            advance();
            return;
          }
          --paren;
        }
        if (t.text == "," && paren == 0 && angle == 0) {
          emit();
          advance();
          continue;
        }
        if (t.text == "{" || t.text == ";") {
          warn("unterminated parameter list");
          emit();
          return;
        }
      }
      param.push_back(&t);
      advance();
    }
  }

  // After the parameter list: throws clause, then a body, ';', or a default value.
  void finish_method() {
    while (!at_end()) {
      if (is_punct("{")) {
        parse_code_block();
        return;
      }
      if (is_punct(";")) {
        advance();
        return;
      }
      if (is_punct("}")) return;
      if (is_ident("default")) {  // annotation member default value
        skip_expression();
        if (is_punct(";")) advance();
        return;
      }
      advance();
    }
  }

  void parse_field(const std::vector<const Token*>& header) {
    auto name_before = [&](const std::vector<const Token*>& tokens) -> std::string {
      for (std::size_t i = tokens.size(); i-- > 0;) {
        if (tokens[i]->kind == Kind::Ident) return tokens[i]->text;
        if (tokens[i]->text != "[" && tokens[i]->text != "]") break;
      }
      return {};
    };
    auto add = [&](const std::string& name) {
      if (!name.empty()) out_.class_attributes.push_back(name);
    };
    add(name_before(header));
    // Further declarators: `, name [= init]` until ';'.
    while (!at_end()) {
      if (is_punct(";")) {
        advance();
        return;
      }
      if (is_punct("}")) return;
      if (is_punct("=")) {
        advance();
        skip_expression();
        continue;
      }
      if (is_punct(",")) {
        advance();
        std::vector<const Token*> next;
        while (!at_end() && !is_punct("=") && !is_punct(",") && !is_punct(";") && !is_punct("}")) {
          if (peek().kind != Kind::Comment) next.push_back(&peek());
          advance();
        }
        add(name_before(next));
        continue;
      }
      advance();
    }
  }

  // Skips an initializer expression up to a top-level ',' or ';', recording calls.
  void skip_expression() {
    int depth = 0;
    while (!at_end()) {
      const Token& t = peek();
      if (t.kind == Kind::Punct) {
        if (depth == 0 && (t.text == "," || t.text == ";")) return;
        if (depth == 0 && t.text == "}") return;
        if (t.text == "(" || t.text == "{" || t.text == "[") ++depth;
        if (t.text == ")" || t.text == "}" || t.text == "]") --depth;
      }
      note_call();
      advance();
    }
  }

  void note_call() {
    const Token& t = peek();
    if (t.kind != Kind::Ident || non_call_keywords().count(t.text) != 0) return;
    std::size_t k = next_code(pos_ + 1);
    // `new Foo<...>(`: skip the type arguments.
    if (k < toks_.size() && toks_[k].kind == Kind::Punct && toks_[k].text == "<" && prev_is_new()) {
      int angle = 0;
      for (; k < toks_.size(); k = next_code(k + 1)) {
        const Token& a = toks_[k];
        if (a.kind == Kind::Punct && a.text == "<") {
          ++angle;
        } else if (a.kind == Kind::Punct && a.text == ">") {
          if (--angle == 0) break;
        } else if (a.kind != Kind::Ident && !(a.kind == Kind::Punct && (a.text == "," || a.text == "." ||
                                                                         a.text == "?" || a.text == "[" ||
                                                                         a.text == "]"))) {
          return;
        }
      }
      k = next_code(k + 1);
    }
    if (k < toks_.size() && toks_[k].kind == Kind::Punct && toks_[k].text == "(") {
      push_unique(out_.called_names, t.text);
    }
  }

  bool prev_is_new() const {
    for (std::size_t k = pos_; k-- > 0;) {
      if (toks_[k].kind == Kind::Comment) continue;
      return toks_[k].kind == Kind::Ident && toks_[k].text == "new";
    }
    return false;
  }

  // Current token is '{'; consumes through the matching '}'.
  void parse_code_block() {
    int depth = 0;
    while (!at_end()) {
      const Token& t = peek();
      if (t.kind == Kind::Punct) {
        if (t.text == "{") ++depth;
        if (t.text == "}") {
          --depth;
          if (depth == 0) {
            advance();
            return;
          }
        }
      }
      note_call();
      advance();
    }
    warn("unexpected end of file inside a code block");
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  CodeStructure& out_;
};

}  // namespace

CodeStructure scan_java(std::string_view source, std::string artifact_id) {
  CodeStructure s;
  s.artifact_id = std::move(artifact_id);
  Scanner scanner(lex(source), s);
  scanner.run();
  return s;
}

CodeStructure scan_structure(const Artifact& artifact, const Project& project) {
  if (artifact.kind != ArtifactKind::Code || !project.is_parsable(artifact)) {
    CodeStructure s;
    s.artifact_id = artifact.id;
    s.warnings.push_back("not structurally parsed: " + artifact.path);
    return s;
  }
  return scan_java(artifact.text, artifact.id);
}

CodeStructure scan_structure(const Artifact& artifact) {
  const auto ext = std::filesystem::path(artifact.path).extension().string();
  if (artifact.kind != ArtifactKind::Code || (ext != ".java" && ext != ".JAVA")) {
    CodeStructure s;
    s.artifact_id = artifact.id;
    s.warnings.push_back("not structurally parsed: " + artifact.path);
    return s;
  }
  return scan_java(artifact.text, artifact.id);
}

std::vector<CodeStructure> scan_project(const Project& project) {
  std::vector<CodeStructure> out;
  for (const auto& a : project.artifacts()) {
    if (a.kind == ArtifactKind::Code) out.push_back(scan_structure(a, project));
  }
  return out;
}

std::set<DependencyEdge> resolve_dependencies(const std::vector<CodeStructure>& structures) {
  std::map<std::string, std::set<std::string>> class_owners;
  std::map<std::string, std::set<std::string>> callable_owners;
  for (const auto& s : structures) {
    for (const auto& c : s.class_names) {
      class_owners[c].insert(s.artifact_id);
      callable_owners[c].insert(s.artifact_id);
    }
    for (const auto& m : s.method_names) callable_owners[m].insert(s.artifact_id);
  }

  std::set<DependencyEdge> edges;
  auto link = [&](const std::string& from, const std::set<std::string>& targets, DependencyKind kind) {
    for (const auto& to : targets) {
      if (to != from) edges.insert({from, to, kind});
    }
  };
  auto lookup = [](const std::map<std::string, std::set<std::string>>& owners,
                   const std::string& name) -> const std::set<std::string>* {
    auto it = owners.find(name);
    return it == owners.end() ? nullptr : &it->second;
  };

  for (const auto& s : structures) {
    for (const auto& imp : s.imports) {
      std::vector<std::string> parts;
      std::stringstream ss(imp);
      std::string part;
      while (std::getline(ss, part, '.')) parts.push_back(part);
      if (parts.empty()) continue;
      const std::string& last = parts.back();
      const std::set<std::string>* owners = last == "*" ? nullptr : lookup(class_owners, last);
      // Static member imports (a.b.C.member, a.b.C.*) name the class one segment earlier.
      if (owners == nullptr && parts.size() >= 2 && !parts[parts.size() - 2].empty() &&
          std::isupper(static_cast<unsigned char>(parts[parts.size() - 2][0]))) {
        owners = lookup(class_owners, parts[parts.size() - 2]);
      }
      if (owners != nullptr) link(s.artifact_id, *owners, DependencyKind::Import);
    }
    for (const auto& target : s.extends_targets) {
      if (const auto* owners = lookup(class_owners, target)) link(s.artifact_id, *owners, DependencyKind::Extend);
    }
    for (const auto& called : s.called_names) {
      if (const auto* owners = lookup(callable_owners, called)) link(s.artifact_id, *owners, DependencyKind::Call);
    }
  }
  return edges;
}

nlohmann::json to_json(const CodeStructure& s) {
  return {{"artifact_id", s.artifact_id},
          {"class_names", s.class_names},
          {"class_comments", s.class_comments},
          {"class_attributes", s.class_attributes},
          {"method_names", s.method_names},
          {"method_comments", s.method_comments},
          {"method_parameters", s.method_parameters},
          {"method_returns", s.method_returns},
          {"imports", s.imports},
          {"extends_targets", s.extends_targets},
          {"called_names", s.called_names},
          {"warnings", s.warnings}};
}

nlohmann::json to_json(const std::vector<CodeStructure>& structures) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : structures) arr.push_back(to_json(s));
  return arr;
}

}  // namespace tlr::java
