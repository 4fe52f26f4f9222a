#include "fixtures.hpp"

#include <atomic>
#include <fstream>
#include <random>

#include "lims/url.hpp"

namespace lims::testing {

TempDir::TempDir() {
    static std::atomic<unsigned> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("lims-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

std::filesystem::path TempDir::write(const std::string& relative, std::string_view content) const {
    const auto p = path_ / relative;
    std::filesystem::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << content;
    return p;
}

LinkRecord link_for(std::string_view page_url, std::string_view resource_url, Timestamp now) {
    const NormalizedUrl page = parse_normalized(page_url);
    const NormalizedUrl res = parse_normalized(resource_url);
    return make_link_record(page.text(), res.text(), res.query, now);
}

} // namespace lims::testing
