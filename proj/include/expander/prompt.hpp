#pragma once

#include "expander/common.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace expander {

/// A literal run of text or a bracketed option group such as
/// "[photo | picture]".
struct TemplateSegment {
  std::string literal;
  std::vector<std::string> options;  ///< non-empty for option groups
  bool is_group() const noexcept { return !options.empty(); }
};

/// Throws InvalidTemplate for unbalanced/nested brackets or empty options.
std::vector<TemplateSegment> parse_template(std::string_view text);
bool is_valid_template(std::string_view text);
std::string render_template(const std::vector<TemplateSegment>& segments);

struct PromptTemplate {
  std::string id;
  std::string class_name;
  std::string text;
  int version = 1;
  std::optional<int> parent_version;

  std::vector<TemplateSegment> segments() const { return parse_template(text); }
  /// Copy with new text, version bumped and lineage recorded.
  PromptTemplate derived(std::string new_text) const;
};

/// One concrete prompt: a uniformly chosen option from each group.
std::string sample_prompt(std::string_view text, Rng& rng);

/// Lower-cased word tokens, brackets and separators removed.
std::vector<std::string> tokenize(std::string_view text);

}  // namespace expander
