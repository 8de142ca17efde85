#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pbl/datasets.hpp"
#include "pbl/tokenizer.hpp"

namespace pbl {

inline constexpr std::string_view kIdentitySlot = "{identity_adj}";

struct Template {
  std::string attribute;
  std::string pattern;  // contains kIdentitySlot exactly once
  Sentiment intended = Sentiment::neutral;
};

/// group name -> descriptors that fill the slot for that group
using GroupDescriptors = std::map<std::string, std::vector<std::string>>;

struct TemplatePack {
  std::string attribute;
  std::vector<Template> templates;
  GroupDescriptors groups;
};

struct EvalExample : LabeledExample {
  std::string attribute;
  std::string group;
  std::string descriptor;
};

TemplatePack parse_template_pack(const nlohmann::json& j, const std::string& source = "<memory>");
TemplatePack load_template_pack(const std::filesystem::path& path);
nlohmann::json template_pack_to_json(const TemplatePack& pack);

/// Cartesian expansion ordered by (template index, group name, descriptor index).
/// Token ids are left empty; see tokenize_examples.
std::vector<EvalExample> expand_templates(std::span<const Template> templates,
                                          const std::map<std::string, GroupDescriptors>& groups_by_attribute);

std::vector<EvalExample> expand_pack(const TemplatePack& pack);

void tokenize_examples(std::span<EvalExample> examples, const Tokenizer& tokenizer);

}  // namespace pbl
