#pragma once

#include <array>
#include <compare>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tlr/corpus.hpp"

namespace tlr::java {

/// The seven fine-grained components of a code artifact, in a fixed order.
enum class Component {
  ClassAttribute,
  ClassComment,
  ClassName,
  MethodComment,
  MethodName,
  MethodParameter,
  MethodReturn,
};

inline constexpr std::size_t kComponentCount = 7;
inline constexpr std::array<Component, kComponentCount> kAllComponents = {
    Component::ClassAttribute, Component::ClassComment, Component::ClassName,
    Component::MethodComment,  Component::MethodName,   Component::MethodParameter,
    Component::MethodReturn};

std::string_view to_string(Component c);

struct CodeStructure {
  std::string artifact_id;
  std::vector<std::string> class_names;
  std::vector<std::string> class_comments;
  std::vector<std::string> class_attributes;
  std::vector<std::string> method_names;
  std::vector<std::string> method_comments;
  /// One entry per parameter: "<TypeSimpleName> <name>".
  std::vector<std::string> method_parameters;
  /// Return type as written (generics kept); constructors contribute nothing.
  std::vector<std::string> method_returns;
  /// Fully-qualified import targets, without the `static` keyword.
  std::vector<std::string> imports;
  /// Simple names after `extends` and `implements`.
  std::vector<std::string> extends_targets;
  /// Unique names used at call sites (`name(`), including `new Type(`.
  std::vector<std::string> called_names;
  std::vector<std::string> warnings;

  const std::vector<std::string>& component(Component c) const;

  bool operator==(const CodeStructure&) const = default;
};

/// Tolerant single-pass scan of Java source. Never throws; malformed input
/// yields whatever was recognized plus warnings.
CodeStructure scan_java(std::string_view source, std::string artifact_id);

/// Scans a code artifact. Artifacts that are not code, or whose extension is
/// not parsable for `project`, produce an empty structure with a warning.
CodeStructure scan_structure(const Artifact& artifact, const Project& project);
CodeStructure scan_structure(const Artifact& artifact);

/// Scans every code artifact of the project, ordered by id.
std::vector<CodeStructure> scan_project(const Project& project);

enum class DependencyKind { Import, Extend, Call };

std::string_view to_string(DependencyKind kind);

struct DependencyEdge {
  std::string from_id;
  std::string to_id;
  DependencyKind kind = DependencyKind::Import;

  auto operator<=>(const DependencyEdge&) const = default;
  bool operator==(const DependencyEdge&) const = default;
};

/// Name-based resolution: an import whose simple name is a class declared in
/// another artifact gives Import; an extends/implements target gives Extend;
/// a called name matching another artifact's method or class name gives
/// Call. Self edges are dropped and duplicates collapse.
std::set<DependencyEdge> resolve_dependencies(const std::vector<CodeStructure>& structures);

nlohmann::json to_json(const CodeStructure& s);
nlohmann::json to_json(const std::vector<CodeStructure>& structures);

}  // namespace tlr::java
