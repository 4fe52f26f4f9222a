#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "lims/providers.hpp"
#include "lims/store_types.hpp"
#include "lims/time.hpp"

namespace lims {

enum class ConditionKind {
    domain_lifecycle_registration,
    domain_lifecycle_expiry,
    domain_ranking,
    threat_intel,
    dependencies,
    sri_violation,
    infrastructure_location,
    core_file,
    tls_status,
    custom,
};

std::string_view to_string(ConditionKind kind);
std::optional<ConditionKind> parse_condition_kind(std::string_view text);

// A named, parameterized condition referenced from the DSL's `if` clause.
struct ConditionBinding {
    std::string name;
    ConditionKind kind = ConditionKind::custom;
    nlohmann::json params = nlohmann::json::object();
    std::int64_t ttl_seconds = 3600;

    bool operator==(const ConditionBinding&) const = default;
};

// Throws ConfigError when params do not fit the kind's schema.
void validate_binding(const ConditionBinding& binding);

ConditionBinding binding_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ConditionBinding& binding);

// Ordered by name; names are unique.
using BindingSet = std::map<std::string, ConditionBinding, std::less<>>;

BindingSet parse_bindings(const nlohmann::json& array);
BindingSet parse_bindings_text(std::string_view json_text);
nlohmann::json to_json(const BindingSet& bindings);

struct Verdict {
    bool violation = false;
    std::string detail;
    nlohmann::json evidence = nlohmann::json::object();
};

struct EvalContext {
    Timestamp now{};
    const Providers& providers;
};

using CustomCondition = std::function<Verdict(const ConditionBinding&, const LinkRecord&, const EvalContext&)>;

// Every eval_* returns violation=true when the request must be denied, and
// throws VerificationError when the answer is inconclusive (missing provider,
// unknown list date, unresolvable host).
Verdict eval_domain_lifecycle_registration(const ConditionBinding& b, const LinkRecord& link, const EvalContext& ctx);
Verdict eval_domain_lifecycle_expiry(const ConditionBinding& b, const LinkRecord& link, const EvalContext& ctx);
Verdict eval_domain_ranking(const ConditionBinding& b, const LinkRecord& link, const EvalContext& ctx);
Verdict eval_threat_intel(const ConditionBinding& b, const LinkRecord& link, const EvalContext& ctx);
Verdict eval_dependencies(const ConditionBinding& b, const LinkRecord& link, const EvalContext& ctx);
Verdict eval_sri_violation(const ConditionBinding& b, const LinkRecord& link, const EvalContext& ctx);
Verdict eval_tls_status(const ConditionBinding& b, const LinkRecord& link, const EvalContext& ctx);
Verdict eval_infrastructure_location(const ConditionBinding& b, const LinkRecord& link, const EvalContext& ctx);
Verdict eval_core_file(const ConditionBinding& b, const LinkRecord& link, const EvalContext& ctx);

enum class Granularity { full_url, full_host, etld1 };
// Projects contacted URLs onto the comparison granularity.
std::set<std::string> project_dependencies(const std::set<std::string>& urls, Granularity g);

class ConditionEngine {
public:
    // Administrator-supplied logic for `custom` bindings, looked up by
    // params.function or, failing that, by the binding name.
    void register_custom(std::string function_name, CustomCondition fn);

    // Throws UnknownCondition or VerificationError.
    Verdict evaluate(const ConditionBinding& binding, const LinkRecord& link, const EvalContext& ctx) const;

private:
    std::map<std::string, CustomCondition, std::less<>> custom_;
};

} // namespace lims
