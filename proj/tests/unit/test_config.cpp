#include "sthdr/config.hpp"
#include "sthdr/errors.hpp"
#include "sthdr_testing/fixtures.hpp"

#include <doctest.h>

#include <fstream>

using namespace sthdr;
using namespace sthdr::testing;

TEST_CASE("training defaults") {
    const TrainConfig c;
    CHECK(c.batch_size == 16);
    CHECK(c.lr_init == 1e-4);
    CHECK(c.lr_min == 1e-6);
    CHECK(c.patch == 256);
    CHECK(c.finetune.batch_size == 8);
    CHECK(c.finetune.patch == 384);
    CHECK(c.beta1 == 0.9);
    CHECK(c.beta2 == 0.999);
    CHECK_NOTHROW(c.validate());
    CHECK_NOTHROW(TrainConfig::tiny().validate());
}

TEST_CASE("entries update the matching field") {
    ModelConfig m;
    TrainConfig t;
    apply_config_entry("batch_size", "4", m, t);
    apply_config_entry("lr_init", "2e-4", m, t);
    apply_config_entry("finetune_patch", "128", m, t);
    apply_config_entry("augment", "off", m, t);
    apply_config_entry("lambda", "1, 0.5, 0.25", m, t);
    apply_config_entry("variant", "SS", m, t);
    CHECK(t.batch_size == 4);
    CHECK(t.lr_init == 2e-4);
    CHECK(t.finetune.patch == 128);
    CHECK_FALSE(t.augment);
    CHECK(m.variant == Variant::SS);
    CHECK(m.n_scales == 1);
    CHECK(m.lambda.size() == 1);

    CHECK_THROWS_AS(apply_config_entry("learning_rate", "1", m, t), ConfigError);
    CHECK_THROWS_AS(apply_config_entry("batch_size", "four", m, t), ConfigError);
    CHECK_THROWS_AS(apply_config_entry("lr_min", "1e-6x", m, t), ConfigError);
    CHECK_THROWS_AS(apply_config_entry("augment", "maybe", m, t), ConfigError);
    CHECK_THROWS_AS(apply_config_entry("variant", "XL", m, t), ConfigError);
}

TEST_CASE("config files") {
    const auto dir = scratch_dir("config");
    std::ofstream(dir / "a.cfg") << "# tiny run\nvariant = MS\nn_scales=2\nlambda = 1,1\n\nmax_steps = 10  # short\n";
    ModelConfig m;
    TrainConfig t;
    load_config_file(dir / "a.cfg", m, t);
    CHECK(m.variant == Variant::MS);
    CHECK(m.n_scales == 2);
    CHECK(t.max_steps == 10);
    CHECK_NOTHROW(m.validate());

    std::ofstream(dir / "b.cfg") << "max_steps 10\n";
    CHECK_THROWS_AS(load_config_file(dir / "b.cfg", m, t), ConfigError);
    CHECK_THROWS_AS(load_config_file(dir / "missing.cfg", m, t), ConfigError);
}

TEST_CASE("validation") {
    TrainConfig t;
    t.lr_min = t.lr_init;
    CHECK_THROWS_AS(t.validate(), ConfigError);
    t = {};
    t.patch = 250;
    CHECK_THROWS_AS(t.validate(), ConfigError);
    t = {};
    t.beta2 = 1;
    CHECK_THROWS_AS(t.validate(), ConfigError);

    ModelConfig m;
    m.lambda = {1, 1};
    CHECK_THROWS_AS(m.validate(), ConfigError);
    m = {};
    m.variant = Variant::HSS;
    CHECK_THROWS_AS(m.validate(), ConfigError); // three scales on a single-scale variant
}

TEST_CASE("JSON round trip") {
    ModelConfig m = ModelConfig::for_variant(Variant::SCM_MS, true);
    m.lambda = {1, 0.5};
    m.supervise_stage1 = true;
    const ModelConfig m2 = model_config_from_json(to_json_string(m));
    CHECK(to_json_string(m2) == to_json_string(m));
    CHECK(m2.lambda == m.lambda);

    TrainConfig t = TrainConfig::tiny();
    t.seed = 123456789012345ULL;
    t.lr_init = 0.1 + 0.2; // not exactly representable in short decimal
    const TrainConfig t2 = train_config_from_json(to_json_string(t));
    CHECK(t2.lr_init == t.lr_init);
    CHECK(t2.seed == t.seed);
    CHECK(to_json_string(t2) == to_json_string(t));

    CHECK_THROWS_AS(model_config_from_json("{\"variant\":\"MS\"}"), FormatError);
    CHECK_THROWS_AS(train_config_from_json("not json"), FormatError);
}
