// SPDX-License-Identifier: Apache-2.0
//
// Prompt templates: an input template turns an example into model input text,
// and a list of verbalizers (optionally wrapped by a target template) gives one
// target text per candidate label.
//
// Grammar:
//   {name}   substitute example field `name`
//   {choice} substitute the verbalizer of the label being scored (target only)
//   {{ }}    literal braces
#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "swarm/error.hpp"

namespace swarm {

enum class SegmentKind { literal, field, choice };

struct Segment {
  SegmentKind kind = SegmentKind::literal;
  std::string text;  // literal text, or the field name

  friend bool operator==(const Segment&, const Segment&) = default;
};

enum class TemplateRole { input, target };

class ParsedTemplate {
 public:
  ParsedTemplate() = default;
  explicit ParsedTemplate(std::vector<Segment> segments) : segments_(std::move(segments)) {}

  const std::vector<Segment>& segments() const { return segments_; }

  /// Re-escapes literal braces so that parse(serialize()) reproduces this tree.
  std::string serialize() const {
    std::string out;
    for (const auto& seg : segments_) {
      switch (seg.kind) {
        case SegmentKind::literal:
          for (char c : seg.text) {
            if (c == '{' || c == '}') out.push_back(c);
            out.push_back(c);
          }
          break;
        case SegmentKind::field:
          out += "{" + seg.text + "}";
          break;
        case SegmentKind::choice:
          out += "{choice}";
          break;
      }
    }
    return out;
  }

  std::set<std::string> field_names() const {
    std::set<std::string> names;
    for (const auto& seg : segments_) {
      if (seg.kind == SegmentKind::field) names.insert(seg.text);
    }
    return names;
  }

  bool uses_choice() const {
    return std::any_of(segments_.begin(), segments_.end(),
                       [](const Segment& s) { return s.kind == SegmentKind::choice; });
  }

  friend bool operator==(const ParsedTemplate&, const ParsedTemplate&) = default;

 private:
  std::vector<Segment> segments_;
};

inline ParsedTemplate parse_template(std::string_view source,
                                     TemplateRole role = TemplateRole::target) {
  std::vector<Segment> segments;
  std::string literal;
  auto flush = [&] {
    if (!literal.empty()) {
      segments.push_back({SegmentKind::literal, std::move(literal)});
      literal.clear();
    }
  };

  std::size_t i = 0;
  while (i < source.size()) {
    const char c = source[i];
    if (c == '{') {
      if (i + 1 < source.size() && source[i + 1] == '{') {
        literal.push_back('{');
        i += 2;
        continue;
      }
      const auto close = source.find_first_of("{}", i + 1);
      if (close == std::string_view::npos || source[close] != '}') {
        fail(ErrorKind::parse,
             "unbalanced brace: '{' at offset " + std::to_string(i) + " is never closed");
      }
      const std::string name(source.substr(i + 1, close - i - 1));
      if (name.empty()) {
        fail(ErrorKind::parse, "empty placeholder name at offset " + std::to_string(i));
      }
      flush();
      if (name == "choice") {
        if (role == TemplateRole::input) {
          fail(ErrorKind::parse, "{choice} is only allowed in a target template");
        }
        segments.push_back({SegmentKind::choice, name});
      } else {
        segments.push_back({SegmentKind::field, name});
      }
      i = close + 1;
    } else if (c == '}') {
      if (i + 1 < source.size() && source[i + 1] == '}') {
        literal.push_back('}');
        i += 2;
        continue;
      }
      fail(ErrorKind::parse, "unbalanced brace: stray '}' at offset " + std::to_string(i));
    } else {
      literal.push_back(c);
      ++i;
    }
  }
  flush();
  return ParsedTemplate(std::move(segments));
}

struct Example {
  std::map<std::string, std::string> fields;
  std::optional<int> label;
};

struct LabelSet {
  std::vector<std::string> labels;

  std::size_t size() const { return labels.size(); }
};

class PromptTemplate {
 public:
  PromptTemplate() = default;

  PromptTemplate(std::string name, std::string_view input_source, std::vector<std::string> choices,
                 std::optional<std::string_view> target_source = std::nullopt)
      : name_(std::move(name)),
        input_(parse_template(input_source, TemplateRole::input)),
        choices_(std::move(choices)) {
    if (target_source) target_ = parse_template(*target_source, TemplateRole::target);
  }

  const std::string& name() const { return name_; }
  const ParsedTemplate& input() const { return input_; }
  const std::vector<std::string>& choices() const { return choices_; }
  const std::optional<ParsedTemplate>& target() const { return target_; }

  std::set<std::string> field_names() const {
    auto names = input_.field_names();
    if (target_) names.merge(target_->field_names());
    return names;
  }

 private:
  std::string name_;
  ParsedTemplate input_;
  std::vector<std::string> choices_;
  std::optional<ParsedTemplate> target_;
};

struct PromptPool {
  std::string task_name;
  LabelSet label_set;
  std::vector<PromptTemplate> templates;

  std::size_t num_labels() const { return label_set.size(); }
  std::size_t num_prompts() const { return templates.size(); }
};

namespace detail {

inline std::string render_segments(const ParsedTemplate& tmpl, const Example& example,
                                   const std::string* choice) {
  std::string out;
  for (const auto& seg : tmpl.segments()) {
    switch (seg.kind) {
      case SegmentKind::literal:
        out += seg.text;
        break;
      case SegmentKind::field: {
        const auto it = example.fields.find(seg.text);
        if (it == example.fields.end()) {
          fail(ErrorKind::render, "unknown field \"" + seg.text + "\"");
        }
        out += it->second;
        break;
      }
      case SegmentKind::choice:
        if (choice == nullptr) fail(ErrorKind::render, "{choice} has no verbalizer to substitute");
        out += *choice;
        break;
    }
  }
  return out;
}

}  // namespace detail

inline std::string render_input(const PromptTemplate& tmpl, const Example& example) {
  return detail::render_segments(tmpl.input(), example, nullptr);
}

/// Entry j is the target text scored for label j.
inline std::vector<std::string> render_targets(const PromptTemplate& tmpl, const Example& example) {
  if (!tmpl.target()) return tmpl.choices();
  std::vector<std::string> out;
  out.reserve(tmpl.choices().size());
  for (const auto& choice : tmpl.choices()) {
    out.push_back(detail::render_segments(*tmpl.target(), example, &choice));
  }
  return out;
}

struct Violation {
  std::string kind;  // choices-arity, duplicate-name, empty-verbalizer, prompt-count, label-set
  std::string template_name;
  std::string detail;
};

struct ValidationReport {
  std::vector<Violation> violations;
  std::set<std::string> fields;
  std::size_t num_prompts = 0;

  bool ok() const { return violations.empty(); }
};

inline ValidationReport validate_pool(const PromptPool& pool) {
  ValidationReport report;
  report.num_prompts = pool.templates.size();
  const std::size_t num_labels = pool.num_labels();

  if (pool.templates.empty()) {
    report.violations.push_back({"prompt-count", "", "pool has no templates"});
  }
  std::set<std::string> unique_labels(pool.label_set.labels.begin(), pool.label_set.labels.end());
  if (unique_labels.size() != num_labels) {
    report.violations.push_back({"label-set", "", "label identifiers are not unique"});
  }

  std::set<std::string> names;
  for (const auto& tmpl : pool.templates) {
    if (!names.insert(tmpl.name()).second) {
      report.violations.push_back({"duplicate-name", tmpl.name(), "template name used twice"});
    }
    if (tmpl.choices().size() != num_labels) {
      report.violations.push_back(
          {"choices-arity", tmpl.name(),
           std::to_string(tmpl.choices().size()) + " choices for " + std::to_string(num_labels) +
               " labels"});
    }
    for (const auto& choice : tmpl.choices()) {
      if (choice.empty()) {
        report.violations.push_back({"empty-verbalizer", tmpl.name(), "empty verbalizer string"});
        break;
      }
    }
    report.fields.merge(tmpl.field_names());
  }
  return report;
}

inline void require_valid(const PromptPool& pool) {
  const auto report = validate_pool(pool);
  if (!report.ok()) {
    const auto& v = report.violations.front();
    fail(ErrorKind::validation, "pool \"" + pool.task_name + "\": " + v.kind +
                                    (v.template_name.empty() ? "" : " in " + v.template_name) +
                                    ": " + v.detail);
  }
}

}  // namespace swarm
