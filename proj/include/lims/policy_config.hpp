#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "lims/conditions.hpp"
#include "lims/policy.hpp"

namespace lims {

// A policy document together with the bindings its conditions refer to.
struct PolicyConfig {
    PolicyDocument document;
    BindingSet bindings;

    // Conditions the request must verify, plus whether an unconditional deny
    // rule matched. URLs are normalized `host/path` text.
    RuleResolution resolve(std::string_view page_url, std::string_view resource_url) const;
};

// Parses and cross-checks: every `if` clause must name a binding, and every
// binding must validate. Throws SyntaxError or ConfigError.
PolicyConfig make_policy_config(std::string_view policy_text, std::string_view bindings_json);
void validate_policy_config(const PolicyConfig& config);

// Names of conditions whose verification decisions are stale after moving
// from `before` to `after`: bindings added, removed or changed, and
// conditions whose referencing rules changed.
std::vector<std::string> changed_conditions(const PolicyConfig& before, const PolicyConfig& after);

// Atomically swappable active configuration.
class ConfigHandle {
public:
    explicit ConfigHandle(PolicyConfig initial)
        : current_(std::make_shared<const PolicyConfig>(std::move(initial))) {}

    std::shared_ptr<const PolicyConfig> load() const {
        std::lock_guard lock(mutex_);
        return current_;
    }
    void store(std::shared_ptr<const PolicyConfig> next) {
        std::lock_guard lock(mutex_);
        current_ = std::move(next);
    }

private:
    mutable std::mutex mutex_;
    std::shared_ptr<const PolicyConfig> current_;
};

} // namespace lims
