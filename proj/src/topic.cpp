#include "mqttg/topic.hpp"

#include <vector>

namespace mqttg {

namespace {

// '/'-separated levels; empty levels are valid ("a//b" has three).
std::vector<std::string_view> split_levels(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t slash = s.find('/', start);
        if (slash == std::string_view::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, slash - start));
        start = slash + 1;
    }
}

}  // namespace

bool valid_topic_filter(std::string_view filter) {
    if (filter.empty() || filter.size() > 0xFFFF) return false;
    if (filter.find('\0') != std::string_view::npos) return false;
    auto levels = split_levels(filter);
    for (std::size_t i = 0; i < levels.size(); ++i) {
        std::string_view level = levels[i];
        if (level == "#") {
            if (i + 1 != levels.size()) return false;  // '#' only as the last level
        } else if (level != "+") {
            if (level.find_first_of("+#") != std::string_view::npos) return false;
        }
    }
    return true;
}

bool valid_topic_name(std::string_view topic) {
    if (topic.empty() || topic.size() > 0xFFFF) return false;
    return topic.find_first_of("+#") == std::string_view::npos &&
           topic.find('\0') == std::string_view::npos;
}

bool topic_matches(std::string_view filter, std::string_view topic) {
    if (filter.empty() || topic.empty()) return false;
    // [MQTT-4.7.2-1] wildcards at the first level never match $-topics
    if (topic.front() == '$' && (filter.front() == '+' || filter.front() == '#')) return false;

    auto fl = split_levels(filter);
    auto tl = split_levels(topic);
    std::size_t i = 0;
    for (; i < fl.size(); ++i) {
        if (fl[i] == "#") return true;  // '#' also covers its parent level
        if (i >= tl.size()) return false;
        if (fl[i] != "+" && fl[i] != tl[i]) return false;
    }
    return i == tl.size();
}

}  // namespace mqttg
