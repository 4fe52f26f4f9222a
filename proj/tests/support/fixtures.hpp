#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "lims/providers.hpp"
#include "lims/store_types.hpp"

namespace lims::testing {

class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path write(const std::string& relative, std::string_view content) const;

private:
    std::filesystem::path path_;
};

// Link record for absolute or normalized URLs.
LinkRecord link_for(std::string_view page_url, std::string_view resource_url, Timestamp now = {});

} // namespace lims::testing
