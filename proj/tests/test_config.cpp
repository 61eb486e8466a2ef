#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "vseg/config.hpp"
#include "vseg/training.hpp"

using namespace vseg;

TEST_CASE("parses sections, dotted keys, comments, and value types") {
    Config c;
    c.parse_text(
        "# a comment\n"
        "seed = 7\n"
        "out = \"runs/a b\"  # trailing comment\n"
        "\n"
        "[schedule]\n"
        "T = 2000\n"
        "beta_start = 1e-6\n"
        "\n"
        "[model]\n"
        "widths = [4, 4, 8]\n"
        "deep.flag = true\n"
        "other = false\n",
        "inline");
    CHECK(c.get_int64("seed", 0) == 7);
    CHECK(c.get_string("out", "") == "runs/a b");
    CHECK(c.get_int("schedule.T", 0) == 2000);
    CHECK(c.get_real("schedule.beta_start", 0) == doctest::Approx(1e-6).epsilon(1e-12));
    CHECK(c.get_int_list("model.widths", {}) == std::vector<int>{4, 4, 8});
    CHECK(c.get_bool("model.deep.flag", false) == true);
    CHECK(c.get_bool("model.other", true) == false);
    CHECK(c.has("schedule.T"));
    CHECK(!c.has("schedule.T_a"));
}

TEST_CASE("defaults returned for absent keys") {
    Config c;
    c.parse_text("a = 1\n", "inline");
    CHECK(c.get_int("missing", 17) == 17);
    CHECK(c.get_real("missing", 2.5) == 2.5);
    CHECK(c.get_bool("missing", true) == true);
    CHECK(c.get_string("missing", "x") == "x");
    CHECK(c.get_int_list("missing", {1, 2}) == std::vector<int>{1, 2});
}

TEST_CASE("syntax and type errors") {
    Config c;
    CHECK_THROWS_AS(c.parse_text("novalue =\n", "inline"), ConfigError);
    CHECK_THROWS_AS(c.parse_text("= 3\n", "inline"), ConfigError);
    CHECK_THROWS_AS(c.parse_text("[unterminated\n", "inline"), ConfigError);
    CHECK_THROWS_AS(c.parse_text("bad..key = 1\n", "inline"), ConfigError);
    CHECK_THROWS_AS(c.parse_text("a = 1\na = 2\n", "inline"), ConfigError);  // duplicate

    Config t;
    t.parse_text("x = notanumber\nf = 1.5\n", "inline");
    CHECK_THROWS_AS(t.get_int("x", 0), ConfigError);
    CHECK_THROWS_AS(t.get_int("f", 0), ConfigError);  // not an integer
    CHECK_THROWS_AS(t.get_bool("x", false), ConfigError);
    CHECK_THROWS_AS(t.get_int_list("x", {}), ConfigError);
}

TEST_CASE("later layers override earlier ones") {
    Config c;
    c.parse_text("a.b = 1\na.c = 2\n", "file");
    c.parse_text("a.b = 10\n", "later");  // same key from a second parse wins
    CHECK(c.get_int("a.b", 0) == 10);
    CHECK(c.get_int("a.c", 0) == 2);
    c.apply_override("a.c=30");
    CHECK(c.get_int("a.c", 0) == 30);
    CHECK_THROWS_AS(c.apply_override("nonsense"), ConfigError);
}

TEST_CASE("environment variables map sections through double underscores") {
    setenv("VSEG_SCHEDULE__BETA_START", "1e-5", 1);
    setenv("VSEG_SEED", "99", 1);
    setenv("VSEGNOPREFIX", "1", 1);
    Config c;
    c.parse_text("schedule.beta_start = 1e-6\n", "file");
    c.apply_env("VSEG_");
    CHECK(c.get_real("schedule.beta_start", 0) == doctest::Approx(1e-5).epsilon(1e-12));
    CHECK(c.get_int64("seed", 0) == 99);
    CHECK(!c.has("nopreifx"));
    unsetenv("VSEG_SCHEDULE__BETA_START");
    unsetenv("VSEG_SEED");
    unsetenv("VSEGNOPREFIX");
}

TEST_CASE("keys match case-insensitively across every layer") {
    setenv("VSEG_SCHEDULE__T", "123", 1);
    Config c;
    c.parse_text("[Schedule]\nT_a = 9\n", "mem");
    c.apply_env("VSEG_");
    c.apply_override("Model.Attn_Level=2");
    CHECK(c.get_int("schedule.T", 0) == 123);
    CHECK(c.get_int("schedule.t_a", 0) == 9);
    CHECK(c.get_int("model.attn_level", 0) == 2);
    CHECK_NOTHROW(c.require_all_consumed());
    unsetenv("VSEG_SCHEDULE__T");

    Config dup;
    CHECK_THROWS_AS(dup.parse_text("k = 1\nK = 2\n", "mem"), ConfigError);
}

TEST_CASE("unconsumed keys are reported and fail the strict check") {
    Config c;
    c.parse_text("known = 1\nmystery.knob = 2\n", "inline");
    (void)c.get_int("known", 0);
    auto left = c.unconsumed();
    REQUIRE(left.size() == 1);
    CHECK(left[0] == "mystery.knob");
    CHECK_THROWS_AS(c.require_all_consumed(), ConfigError);
    (void)c.get_int("mystery.knob", 0);
    CHECK_NOTHROW(c.require_all_consumed());
}

TEST_CASE("config file round trip through the filesystem") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "vseg_cfg_test";
    fs::create_directories(dir);
    {
        std::ofstream f(dir / "a.toml");
        f << "[train]\nlr = 0.001\n";
    }
    Config c;
    c.load_file((dir / "a.toml").string());
    CHECK(c.get_real("train.lr", 0) == doctest::Approx(0.001));
    CHECK_THROWS_AS(c.load_file((dir / "missing.toml").string()), IoError);
}

TEST_CASE("train config reads every section and validates") {
    Config c;
    c.parse_text(
        "seed = 5\n"
        "out = \"runs/x\"\n"
        "[data]\n"
        "root = \"/tmp/d\"\n"
        "image_size = 32\n"
        "batch = 3\n"
        "augment = false\n"
        "[schedule]\n"
        "T = 100\n"
        "T_a = 10\n"
        "beta_start = 1e-5\n"
        "beta_end = 2e-2\n"
        "[model]\n"
        "widths = [4, 8]\n"
        "attn_level = 1\n"
        "norm_groups = 2\n"
        "temb_dim = 8\n"
        "gen_base = 4\n"
        "spade_hidden = 6\n"
        "disc_base = 4\n"
        "[train]\n"
        "lr = 1e-4\n"
        "beta1 = 0.9\n"
        "alpha = 0.1\n"
        "beta = 2.0\n"
        "epochs = 3\n"
        "max_steps = 12\n"
        "[cycle]\n"
        "reentry_t = 4\n"
        "[ablation]\n"
        "no_cyclic = true\n"
        "drop_ds = true\n"
        "[inference]\n"
        "threshold = 0.4\n"
        "t_a = 2\n",
        "inline");
    TrainConfig t = TrainConfig::from_config(c);
    CHECK_NOTHROW(c.require_all_consumed());
    CHECK(t.seed == 5);
    CHECK(t.out == "runs/x");
    CHECK(t.data_root == "/tmp/d");
    CHECK(t.image_size == 32);
    CHECK(t.batch == 3);
    CHECK(t.augment == false);
    CHECK(t.T == 100);
    CHECK(t.T_a == 10);
    CHECK(t.widths == std::vector<int>{4, 8});
    CHECK(t.attn_level == 1);
    CHECK(t.lr == doctest::Approx(1e-4));
    CHECK(t.adam_beta1 == doctest::Approx(0.9));
    CHECK(t.weights.alpha == doctest::Approx(0.1));
    CHECK(t.weights.beta == doctest::Approx(2.0));
    CHECK(t.epochs == 3);
    CHECK(t.max_steps == 12);
    CHECK(t.reentry_t == 4);
    CHECK(t.no_cyclic);
    CHECK(t.drop_ds);
    CHECK(!t.drop_da);
    CHECK(t.threshold == doctest::Approx(0.4));
    CHECK(t.t_a == 2);
    CHECK_NOTHROW(t.validate());
}

TEST_CASE("defaults match the paper recipe") {
    TrainConfig t;
    CHECK(t.T == 2000);
    CHECK(t.T_a == 200);
    CHECK(t.beta_start == doctest::Approx(1e-6).epsilon(1e-12));
    CHECK(t.beta_end == doctest::Approx(1e-2).epsilon(1e-12));
    CHECK(t.widths == std::vector<int>{64, 64, 128, 128, 256, 256});
    CHECK(t.attn_level == 4);
    CHECK(t.lr == doctest::Approx(5e-6).epsilon(1e-12));
    CHECK(t.adam_beta1 == doctest::Approx(0.5));
    CHECK(t.adam_beta2 == doctest::Approx(0.999));
    CHECK(t.weights.alpha == doctest::Approx(0.2));
    CHECK(t.weights.beta == doctest::Approx(5.0));
    CHECK(t.epochs == 150);
    CHECK(t.t_a == 0);
    CHECK_NOTHROW(t.validate());
}

TEST_CASE("validation rejects inconsistent recipes") {
    auto base = [] {
        TrainConfig t;
        t.widths = {4, 8};
        t.attn_level = 1;
        t.image_size = 32;
        return t;
    };
    CHECK_NOTHROW(base().validate());
    {
        auto t = base();
        t.lr = 0;
        CHECK_THROWS_AS(t.validate(), ConfigError);
    }
    {
        auto t = base();
        t.T_a = t.T + 1;
        CHECK_THROWS_AS(t.validate(), ConfigError);
    }
    {
        auto t = base();
        t.no_diffusion_module = true;
        t.autoencoder_latent = true;
        CHECK_THROWS_AS(t.validate(), ConfigError);
    }
    {
        auto t = base();
        t.reentry_t = t.T_a + 1;
        CHECK_THROWS_AS(t.validate(), ConfigError);
    }
    {
        auto t = base();
        t.val_metric = "accuracy";
        CHECK_THROWS_AS(t.validate(), ConfigError);
    }
    {
        auto t = base();
        t.image_size = 30;  // not divisible by the model stride
        CHECK_THROWS_AS(t.validate(), ConfigError);
    }
    {
        auto t = base();
        t.image_size = 16;  // too small for the patch discriminators
        CHECK_THROWS_AS(t.validate(), ConfigError);
    }
    {
        auto t = base();
        t.t_a = t.T_a + 5;
        CHECK_THROWS_AS(t.validate(), ConfigError);
    }
}

TEST_CASE("train config json round trip preserves every field") {
    TrainConfig t;
    t.seed = 123;
    t.out = "runs/rt";
    t.data_root = "/data/x";
    t.image_size = 32;
    t.batch = 5;
    t.augment = false;
    t.T = 321;
    t.T_a = 45;
    t.beta_start = 3e-6;
    t.beta_end = 4e-3;
    t.widths = {6, 10};
    t.attn_level = 0;
    t.norm_groups = 3;
    t.temb_dim = 12;
    t.gen_base = 5;
    t.spade_hidden = 7;
    t.disc_base = 6;
    t.lr = 7e-5;
    t.adam_beta1 = 0.77;
    t.adam_beta2 = 0.888;
    t.weights.alpha = 0.3;
    t.weights.beta = 4.5;
    t.epochs = 9;
    t.max_steps = 101;
    t.reentry_t = 17;
    t.val_metric = "iou";
    t.no_sspade = true;
    t.ce_for_l1 = true;
    t.no_background_inputs = true;
    t.threshold = 0.6;
    t.t_a = 3;

    TrainConfig r = TrainConfig::from_json(t.to_json());
    CHECK(r.seed == t.seed);
    CHECK(r.out == t.out);
    CHECK(r.data_root == t.data_root);
    CHECK(r.image_size == t.image_size);
    CHECK(r.batch == t.batch);
    CHECK(r.augment == t.augment);
    CHECK(r.T == t.T);
    CHECK(r.T_a == t.T_a);
    CHECK(r.beta_start == t.beta_start);
    CHECK(r.beta_end == t.beta_end);
    CHECK(r.widths == t.widths);
    CHECK(r.attn_level == t.attn_level);
    CHECK(r.norm_groups == t.norm_groups);
    CHECK(r.temb_dim == t.temb_dim);
    CHECK(r.gen_base == t.gen_base);
    CHECK(r.spade_hidden == t.spade_hidden);
    CHECK(r.disc_base == t.disc_base);
    CHECK(r.lr == t.lr);
    CHECK(r.adam_beta1 == t.adam_beta1);
    CHECK(r.adam_beta2 == t.adam_beta2);
    CHECK(r.weights.alpha == t.weights.alpha);
    CHECK(r.weights.beta == t.weights.beta);
    CHECK(r.epochs == t.epochs);
    CHECK(r.max_steps == t.max_steps);
    CHECK(r.reentry_t == t.reentry_t);
    CHECK(r.val_metric == t.val_metric);
    CHECK(r.no_sspade == t.no_sspade);
    CHECK(r.ce_for_l1 == t.ce_for_l1);
    CHECK(r.no_background_inputs == t.no_background_inputs);
    CHECK(r.threshold == t.threshold);
    CHECK(r.t_a == t.t_a);
    CHECK_THROWS_AS(TrainConfig::from_json("{ not json"), ConfigError);
}
