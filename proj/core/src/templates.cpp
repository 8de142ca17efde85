#include "pbl/templates.hpp"

#include <fstream>

#include "pbl/error.hpp"

namespace pbl {

namespace {

std::size_t count_slots(std::string_view pattern) {
  std::size_t n = 0;
  for (auto pos = pattern.find(kIdentitySlot); pos != std::string_view::npos;
       pos = pattern.find(kIdentitySlot, pos + kIdentitySlot.size())) {
    ++n;
  }
  return n;
}

void check_slot(const Template& t) {
  if (count_slots(t.pattern) != 1) {
    fail(ErrorKind::template_error,
         "template '" + t.pattern + "' must contain " + std::string(kIdentitySlot) + " exactly once");
  }
}

}  // namespace

TemplatePack parse_template_pack(const nlohmann::json& j, const std::string& source) {
  TemplatePack pack;
  try {
    pack.attribute = j.at("attribute").get<std::string>();
    for (const auto& t : j.at("templates")) {
      Template tpl;
      tpl.attribute = pack.attribute;
      tpl.pattern = t.at("pattern").get<std::string>();
      try {
        tpl.intended = parse_sentiment(t.at("sentiment").get<std::string>());
      } catch (const Error& e) {
        fail(ErrorKind::template_error, source + ": " + e.what());
      }
      check_slot(tpl);
      pack.templates.push_back(std::move(tpl));
    }
    for (const auto& [group, descriptors] : j.at("groups").items()) {
      pack.groups[group] = descriptors.get<std::vector<std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::template_error, source + ": malformed template pack (" + e.what() + ")");
  }
  if (pack.attribute.empty()) fail(ErrorKind::template_error, source + ": empty attribute name");
  if (pack.groups.size() < 2) fail(ErrorKind::template_error, source + ": a pack needs at least two groups");
  for (const auto& [group, descriptors] : pack.groups) {
    if (descriptors.empty()) fail(ErrorKind::template_error, source + ": group '" + group + "' has no descriptors");
  }
  return pack;
}

TemplatePack load_template_pack(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::template_error, "cannot open template pack " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::template_error, path.string() + ": invalid JSON (" + e.what() + ")");
  }
  return parse_template_pack(j, path.string());
}

nlohmann::json template_pack_to_json(const TemplatePack& pack) {
  nlohmann::json templates = nlohmann::json::array();
  for (const auto& t : pack.templates) templates.push_back({{"pattern", t.pattern}, {"sentiment", to_string(t.intended)}});
  return {{"attribute", pack.attribute}, {"templates", templates}, {"groups", pack.groups}};
}

std::vector<EvalExample> expand_templates(std::span<const Template> templates,
                                          const std::map<std::string, GroupDescriptors>& groups_by_attribute) {
  std::vector<EvalExample> out;
  for (const auto& t : templates) {
    check_slot(t);
    const auto it = groups_by_attribute.find(t.attribute);
    if (it == groups_by_attribute.end()) fail(ErrorKind::template_error, "unknown attribute '" + t.attribute + "'");
    const auto slot = t.pattern.find(kIdentitySlot);
    for (const auto& [group, descriptors] : it->second) {
      for (const auto& descriptor : descriptors) {
        EvalExample ex;
        ex.text = t.pattern.substr(0, slot) + descriptor + t.pattern.substr(slot + kIdentitySlot.size());
        ex.label = t.intended;
        ex.raw_label = to_string(t.intended);
        ex.attribute = t.attribute;
        ex.group = group;
        ex.descriptor = descriptor;
        out.push_back(std::move(ex));
      }
    }
  }
  return out;
}

std::vector<EvalExample> expand_pack(const TemplatePack& pack) {
  return expand_templates(pack.templates, {{pack.attribute, pack.groups}});
}

void tokenize_examples(std::span<EvalExample> examples, const Tokenizer& tokenizer) {
  for (auto& ex : examples) {
    ex.token_ids = tokenizer.encode(ex.text);
    if (ex.token_ids.empty()) fail(ErrorKind::data, "template example '" + ex.text + "' has no tokens");
  }
}

}  // namespace pbl
