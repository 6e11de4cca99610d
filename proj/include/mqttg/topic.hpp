#ifndef MQTTG_TOPIC_HPP
#define MQTTG_TOPIC_HPP

#include <string_view>

namespace mqttg {

// Topic filter syntax per MQTT 3.1.1: '+' alone in a level, '#' alone in the
// last level, nonempty, no NUL.
bool valid_topic_filter(std::string_view filter);

// Publish topic: nonempty, no wildcards, no NUL.
bool valid_topic_name(std::string_view topic);

// Level-wise wildcard matching. Filters starting with a wildcard never match
// topics starting with '$'.
bool topic_matches(std::string_view filter, std::string_view topic);

}  // namespace mqttg

#endif
