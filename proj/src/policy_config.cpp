#include "lims/policy_config.hpp"

#include <algorithm>
#include <set>

#include "lims/error.hpp"

namespace lims {

RuleResolution PolicyConfig::resolve(std::string_view page_url, std::string_view resource_url) const {
    const auto matching = applicable_rules(document, page_url, resource_url);
    return resolve_rules(matching);
}

void validate_policy_config(const PolicyConfig& config) {
    for (const auto& rule : config.document.rules) {
        if (rule.condition && !config.bindings.contains(*rule.condition)) {
            throw ConfigError("rule " + std::to_string(rule.rule_id) + " references unbound condition '" +
                              *rule.condition + "'");
        }
    }
    for (const auto& [name, binding] : config.bindings) {
        if (name != binding.name) throw ConfigError("binding key mismatch for '" + name + "'");
        validate_binding(binding);
    }
}

PolicyConfig make_policy_config(std::string_view policy_text, std::string_view bindings_json) {
    PolicyConfig config;
    config.document = parse_policy(policy_text);
    config.bindings = bindings_json.empty() ? BindingSet{} : parse_bindings_text(bindings_json);
    validate_policy_config(config);
    return config;
}

namespace {

std::multiset<std::string> rules_for(const PolicyDocument& doc, const std::string& condition) {
    std::multiset<std::string> out;
    for (const auto& rule : doc.rules) {
        if (rule.condition == condition) out.insert(serialize_rule(rule));
    }
    return out;
}

} // namespace

std::vector<std::string> changed_conditions(const PolicyConfig& before, const PolicyConfig& after) {
    std::set<std::string> names;
    for (const auto& [name, _] : before.bindings) names.insert(name);
    for (const auto& [name, _] : after.bindings) names.insert(name);
    for (const auto& r : before.document.rules) if (r.condition) names.insert(*r.condition);
    for (const auto& r : after.document.rules) if (r.condition) names.insert(*r.condition);

    std::vector<std::string> out;
    for (const auto& name : names) {
        const auto b = before.bindings.find(name);
        const auto a = after.bindings.find(name);
        const bool in_before = b != before.bindings.end();
        const bool in_after = a != after.bindings.end();
        if (in_before != in_after || (in_before && !(b->second == a->second)) ||
            rules_for(before.document, name) != rules_for(after.document, name)) {
            out.push_back(name);
        }
    }
    return out;
}

} // namespace lims
