#include "expander/prompt.hpp"

#include <cctype>

namespace expander {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::vector<TemplateSegment> parse_template(std::string_view text) {
  std::vector<TemplateSegment> out;
  std::string literal;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == ']') throw Error(ErrorCode::InvalidTemplate, "unmatched ']' at " + std::to_string(i));
    if (c != '[') {
      literal.push_back(c);
      ++i;
      continue;
    }
    const auto close = text.find_first_of("[]", i + 1);
    if (close == std::string_view::npos || text[close] != ']')
      throw Error(ErrorCode::InvalidTemplate, "unbalanced '[' at " + std::to_string(i));
    if (!literal.empty()) {
      out.push_back({std::move(literal), {}});
      literal.clear();
    }
    TemplateSegment group;
    const std::string_view body = text.substr(i + 1, close - i - 1);
    std::size_t start = 0;
    while (true) {
      const auto bar = body.find('|', start);
      std::string opt = trim(body.substr(start, bar == std::string_view::npos ? body.npos : bar - start));
      if (opt.empty()) throw Error(ErrorCode::InvalidTemplate, "empty option in group at " + std::to_string(i));
      group.options.push_back(std::move(opt));
      if (bar == std::string_view::npos) break;
      start = bar + 1;
    }
    out.push_back(std::move(group));
    i = close + 1;
  }
  if (!literal.empty()) out.push_back({std::move(literal), {}});
  return out;
}

bool is_valid_template(std::string_view text) {
  try {
    parse_template(text);
    return true;
  } catch (const Error&) {
    return false;
  }
}

std::string render_template(const std::vector<TemplateSegment>& segments) {
  std::string out;
  for (const auto& s : segments) {
    if (!s.is_group()) {
      out += s.literal;
      continue;
    }
    out += '[';
    for (std::size_t k = 0; k < s.options.size(); ++k) {
      if (k) out += " | ";
      out += s.options[k];
    }
    out += ']';
  }
  return out;
}

PromptTemplate PromptTemplate::derived(std::string new_text) const {
  PromptTemplate p = *this;
  p.text = std::move(new_text);
  p.parent_version = version;
  p.version = version + 1;
  return p;
}

std::string sample_prompt(std::string_view text, Rng& rng) {
  std::string out;
  for (const auto& s : parse_template(text))
    out += s.is_group() ? s.options[rng.below(s.options.size())] : s.literal;
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || c == '-' || c == '\'') {
      cur.push_back(static_cast<char>(std::tolower(u)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace expander
