#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include <fedh2l/config.hpp>

using namespace fedh2l;

namespace {

RunConfig parse(const std::string& text) {
    return config_from_json(nlohmann::json::parse(text));
}

}  // namespace

TEST_CASE("empty object yields the defaults") {
    const RunConfig c = parse("{}");
    REQUIRE(c.dataset == "synthetic");
    REQUIRE(c.alpha == 0.10);
    REQUIRE(c.mutual_every == 1);
    REQUIRE(c.methods == std::vector<std::string>{"fedh2l"});
    REQUIRE(c.hidden == std::vector<std::vector<std::size_t>>{{32}});
    validate_config(c);
}

TEST_CASE("unknown keys are rejected") {
    REQUIRE_THROWS_AS(parse(R"({"alpa": 0.2})"), ConfigError);
    REQUIRE_THROWS_AS(parse(R"({"rounds": 10, "extra": 1})"), ConfigError);
    REQUIRE_THROWS_AS(parse("[1, 2]"), ConfigError);
}

TEST_CASE("bad value types are rejected") {
    REQUIRE_THROWS_AS(parse(R"({"rounds": "many"})"), ConfigError);
    REQUIRE_THROWS_AS(parse(R"({"alpha": [1]})"), ConfigError);
    REQUIRE_THROWS_AS(parse(R"({"seeds": "x"})"), ConfigError);
}

TEST_CASE("hidden accepts one shared or per-node architectures") {
    const RunConfig broadcast = parse(R"({"hidden": [64, 32]})");
    REQUIRE(broadcast.hidden == std::vector<std::vector<std::size_t>>{{64, 32}});
    const RunConfig per_node = parse(R"({"hidden": [[32], [48], [32, 16], [64]]})");
    REQUIRE(per_node.hidden.size() == 4);
    REQUIRE(per_node.hidden[2] == std::vector<std::size_t>{32, 16});
    REQUIRE_THROWS_AS(parse(R"({"hidden": []})"), ConfigError);
    REQUIRE_THROWS_AS(parse(R"({"hidden": [[32], 16]})"), ConfigError);
}

TEST_CASE("validation catches out-of-range settings") {
    auto expect_invalid = [](const std::string& text) {
        const RunConfig c = parse(text);
        REQUIRE_THROWS_AS(validate_config(c), ConfigError);
    };
    expect_invalid(R"({"alpha": 0.0})");
    expect_invalid(R"({"alpha": 1.0})");
    expect_invalid(R"({"alpha": 0.5, "val_frac": 0.3, "test_frac": 0.3})");
    expect_invalid(R"({"rounds": 0})");
    expect_invalid(R"({"mutual_every": 0})");
    expect_invalid(R"({"batch": 0})");
    expect_invalid(R"({"optimizer": "adamw"})");
    expect_invalid(R"({"lr_local": 0.0})");
    expect_invalid(R"({"weight_decay": -0.1})");
    expect_invalid(R"({"conflict": "clip"})");
    expect_invalid(R"({"local_grad": "window"})");
    expect_invalid(R"({"schedule": "ring"})");
    expect_invalid(R"({"methods": ["fedsgd"]})");
    expect_invalid(R"({"methods": []})");
    expect_invalid(R"({"seeds": []})");
    expect_invalid(R"({"participation": 0.0})");
    expect_invalid(R"({"participation": 1.5})");
    expect_invalid(R"({"classes": 1})");
    expect_invalid(R"({"dataset": "csv"})");
    expect_invalid(R"({"dataset": "idx"})");  // missing paths and angles
    expect_invalid(R"({"eval_every": 0})");
    expect_invalid(R"({"hidden": [[32], [0]]})");
}

TEST_CASE("config hash ignores methods and seeds but tracks the rest") {
    const RunConfig base = parse("{}");
    RunConfig other_methods = base;
    other_methods.methods = {"ind", "agg"};
    other_methods.seeds = {9, 10, 11};
    REQUIRE(config_hash(base) == config_hash(other_methods));

    RunConfig different = base;
    different.alpha = 0.2;
    REQUIRE(config_hash(base) != config_hash(different));

    RunConfig conflict_off = base;
    conflict_off.conflict = "off";
    REQUIRE(config_hash(base) != config_hash(conflict_off));
}

TEST_CASE("load_config reads a file and validates it") {
    const std::string path = "/tmp/fedh2l_test_config.json";
    {
        std::ofstream out(path);
        out << R"({"rounds": 120, "methods": ["fedh2l", "ind"], "seeds": [1, 2]})";
    }
    const RunConfig c = load_config(path);
    REQUIRE(c.rounds == 120);
    REQUIRE(c.methods.size() == 2);
    std::remove(path.c_str());
    REQUIRE_THROWS_AS(load_config("/tmp/no_such_config_321.json"), ConfigError);
    {
        std::ofstream out(path);
        out << "{not json";
    }
    REQUIRE_THROWS_AS(load_config(path), ConfigError);
    {
        std::ofstream out(path);
        out << R"({"rounds": 0})";
    }
    REQUIRE_THROWS_AS(load_config(path), ConfigError);
    std::remove(path.c_str());
}

TEST_CASE("round trip through to_json preserves the configuration") {
    RunConfig c = parse("{}");
    c.alpha = 0.25;
    c.hidden = {{16}, {24}};
    c.methods = {"agg"};
    c.conflict = "pcgrad";
    const RunConfig back = config_from_json(to_json(c));
    REQUIRE(back.alpha == c.alpha);
    REQUIRE(back.hidden == c.hidden);
    REQUIRE(back.methods == c.methods);
    REQUIRE(back.conflict == c.conflict);
    REQUIRE(config_hash(back) == config_hash(c));
}
