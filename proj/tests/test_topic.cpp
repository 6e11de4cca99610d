#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "generators.hpp"
#include "mqttg/sim.hpp"
#include "mqttg/topic.hpp"

using namespace mqttg;

TEST_CASE("filter syntax validation") {
    CHECK(valid_topic_filter("a"));
    CHECK(valid_topic_filter("a/b/c"));
    CHECK(valid_topic_filter("a/+/c"));
    CHECK(valid_topic_filter("+"));
    CHECK(valid_topic_filter("#"));
    CHECK(valid_topic_filter("a/#"));
    CHECK(valid_topic_filter("+/+/#"));
    CHECK(valid_topic_filter("a//b"));  // empty levels are legal
    CHECK(valid_topic_filter("/"));
    CHECK(valid_topic_filter("$SYS/#"));

    CHECK_FALSE(valid_topic_filter(""));
    CHECK_FALSE(valid_topic_filter("a/#/b"));  // '#' not last
    CHECK_FALSE(valid_topic_filter("#/a"));
    CHECK_FALSE(valid_topic_filter("a#"));   // '#' not alone in its level
    CHECK_FALSE(valid_topic_filter("a+"));   // '+' not alone in its level
    CHECK_FALSE(valid_topic_filter("a/b+"));
    CHECK_FALSE(valid_topic_filter("a/+b/c"));
    CHECK_FALSE(valid_topic_filter(std::string("a\0b", 3)));
}

TEST_CASE("topic name validation") {
    CHECK(valid_topic_name("a/b"));
    CHECK(valid_topic_name("$SYSg/geofence/set"));
    CHECK_FALSE(valid_topic_name(""));
    CHECK_FALSE(valid_topic_name("a/+"));
    CHECK_FALSE(valid_topic_name("a/#"));
}

TEST_CASE("wildcard matching follows the 3.1.1 rules") {
    CHECK(topic_matches("a/+", "a/b"));
    CHECK(topic_matches("a/#", "a/b/c"));
    CHECK_FALSE(topic_matches("a/+", "a/b/c"));

    CHECK(topic_matches("a/b", "a/b"));
    CHECK_FALSE(topic_matches("a/b", "a/c"));
    CHECK_FALSE(topic_matches("a/b", "a"));
    CHECK_FALSE(topic_matches("a", "a/b"));

    // '#' also matches the parent level
    CHECK(topic_matches("a/#", "a"));
    CHECK(topic_matches("#", "a"));
    CHECK(topic_matches("#", "a/b/c"));
    CHECK_FALSE(topic_matches("a/#", "ab"));

    // '+' needs exactly one level, which may be empty
    CHECK_FALSE(topic_matches("a/+", "a"));
    CHECK(topic_matches("a/+", "a/"));
    CHECK(topic_matches("+", "a"));
    CHECK_FALSE(topic_matches("+", "a/b"));
    CHECK(topic_matches("+/+", "a/"));

    // empty levels are distinct levels
    CHECK(topic_matches("a//c", "a//c"));
    CHECK_FALSE(topic_matches("a//c", "a/c"));
}

TEST_CASE("dollar topics never match first-level wildcards") {
    CHECK_FALSE(topic_matches("#", "$SYS/broker/load"));
    CHECK_FALSE(topic_matches("+/broker/load", "$SYS/broker/load"));
    CHECK_FALSE(topic_matches("#", "$SYSg/geofence/set"));
    CHECK(topic_matches("$SYS/#", "$SYS/broker/load"));
    CHECK(topic_matches("$SYS/broker/load", "$SYS/broker/load"));
}

TEST_CASE("production matcher agrees with the oracle matcher") {
    gen::PacketGen g(5);
    auto random_filter = [&]() {
        std::string f;
        std::size_t levels = 1 + g.pick(4);
        for (std::size_t i = 0; i < levels; ++i) {
            if (i > 0) f += "/";
            switch (g.pick(4)) {
                case 0: f += "+"; break;
                case 1:
                    if (i + 1 == levels) {
                        f += "#";
                        break;
                    }
                    [[fallthrough]];
                default: f += g.word(1, 3); break;
            }
        }
        return f;
    };
    auto random_topic = [&]() {
        std::string t = g.coin() ? g.word(1, 3) : std::string("$SYS");
        std::size_t levels = g.pick(4);
        for (std::size_t i = 0; i < levels; ++i) t += "/" + g.word(1, 3);
        return t;
    };
    for (int i = 0; i < 20000; ++i) {
        std::string f = random_filter();
        std::string t = random_topic();
        if (!valid_topic_filter(f)) continue;
        CHECK(topic_matches(f, t) == sim::oracle_topic_matches(f, t));
    }
}
