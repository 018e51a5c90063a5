#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "celif/config.hpp"
#include "celif/error.hpp"
#include "support.hpp"

using namespace celif;
using namespace celif::testing;

TEST_CASE("text round trip preserves every key") {
  RunConfig c;
  c.task = TaskKind::CopyMemory;
  c.seq_len = 37;
  c.hidden = {8, 16};
  c.neuron = NeuronKind::Alif;
  c.variant = 3;
  c.connectivity = Connectivity::Recurrent;
  c.te_sharing = TeSharing::Shared;
  c.readout = Readout::PerStep;
  c.alpha = 0.1 + 0.2;
  c.beta = 1.0 / 3.0;
  c.lr = 1.234e-4;
  c.target_loss = 0.25;
  c.seed = 0xFFFFFFFFFFFFFFFFULL;
  c.out_dir = "some dir/with spaces";
  c.wall_clock = false;
  const std::string text = config_to_text(c);
  const RunConfig back = parse_config(text);
  CHECK(config_to_text(back) == text);
  CHECK(back.alpha == c.alpha);
  CHECK(*back.beta == c.beta);
  CHECK(back.seed == c.seed);
  CHECK(back.out_dir == c.out_dir);
  CHECK(back.hidden == c.hidden);
  for (const auto& key : config_keys()) CHECK(config_value(back, key) == config_value(c, key));
}

TEST_CASE("parsing comments, blanks and overrides") {
  const RunConfig c = parse_config("# header\n\ntask = adding   # trailing\nseq_len=50\nhidden = 4, 5\nseed = 0x10\n");
  CHECK(c.task == TaskKind::Adding);
  CHECK(c.seq_len == 50);
  CHECK(c.hidden == std::vector<std::size_t>{4, 5});
  CHECK(c.seed == 16);
  RunConfig d = c;
  apply_setting(d, "wall_clock", "off");
  CHECK_FALSE(d.wall_clock);
  apply_setting(d, "lr", "auto");
  CHECK_FALSE(d.lr.has_value());
}

TEST_CASE("parse errors name the line") {
  CHECK_THROWS_WITH_AS(parse_config("task = adding\nbogus = 1\n"), doctest::Contains("line 2"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("task = adding\nbogus = 1\n"), doctest::Contains("bogus"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("seq_len\n"), doctest::Contains("line 1"), ConfigError);
  CHECK_THROWS_AS(parse_config("seq_len = ten\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("seq_len = -3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("alpha = 0.5x\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("wall_clock = maybe\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("task = tetris\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("hidden = \n"), ConfigError);
  CHECK_THROWS_AS(load_config(scratch("config-missing") / "absent.cfg"), IoError);
}

TEST_CASE("auto values resolve per task") {
  RunConfig c;
  c.task = TaskKind::CopyMemory;
  c.seq_len = 100;
  CHECK(model_spec(c).neuron.beta == doctest::Approx(0.99));
  c.seq_len = 200;
  CHECK(model_spec(c).neuron.beta == doctest::Approx(0.995));
  CHECK(model_spec(c).seq_len == 220);
  CHECK(model_spec(c).readout == Readout::PerStep);
  CHECK(adam_config(c).learning_rate == doctest::Approx(1e-3));

  c.task = TaskKind::Adding;
  CHECK(model_spec(c).neuron.beta == doctest::Approx(0.99));
  CHECK(model_spec(c).readout == Readout::LastStep);
  CHECK(model_spec(c).input_dim == 2);
  CHECK(adam_config(c).learning_rate == doctest::Approx(5e-4));

  c.task = TaskKind::PsMnist;
  c.image_side = 14;
  CHECK(model_spec(c).seq_len == 196);
  CHECK(model_spec(c).readout == Readout::MeanLogit);
  c.lr = 0.01;
  c.beta = 0.5;
  c.readout = Readout::LastStep;
  CHECK(adam_config(c).learning_rate == 0.01);
  CHECK(model_spec(c).neuron.beta == 0.5);
  CHECK(model_spec(c).readout == Readout::LastStep);
}

TEST_CASE("validation rejects bad values before any work") {
  RunConfig c;
  CHECK_NOTHROW(validate(c));
  auto rejects = [](auto mutate) {
    RunConfig bad;
    mutate(bad);
    CHECK_THROWS_AS(validate(bad), ConfigError);
  };
  rejects([](RunConfig& x) { x.alpha = 1.5; });
  rejects([](RunConfig& x) { x.beta = 1.5; });
  rejects([](RunConfig& x) { x.batch_size = 0; });
  rejects([](RunConfig& x) { x.lr = 0; });
  rejects([](RunConfig& x) {
    x.task = TaskKind::SeqMnist;
    x.image_side = 29;
  });
  rejects([](RunConfig& x) { x.variant = 7; });
  rejects([](RunConfig& x) { x.hidden = {4, 0}; });
  rejects([](RunConfig& x) { x.adam_beta1 = 1; });
  rejects([](RunConfig& x) { x.theta0 = -1; });
  rejects([](RunConfig& x) { x.out_dir.clear(); });
  rejects([](RunConfig& x) { x.seq_len = 1; });
}

TEST_CASE("data root falls back to the environment") {
  RunConfig c;
  ::setenv("CELIF_DATA_ROOT", "/from/env", 1);
  CHECK(data_root(c) == "/from/env");
  c.data_root = "/explicit";
  CHECK(data_root(c) == "/explicit");
  ::unsetenv("CELIF_DATA_ROOT");
  c.data_root.clear();
  CHECK(data_root(c).empty());
}

TEST_CASE("config files load") {
  const auto path = scratch("config-load") / "run.cfg";
  std::ofstream(path) << "task = copy\nseq_len = 12\n";
  const RunConfig c = load_config(path);
  CHECK(c.task == TaskKind::CopyMemory);
  CHECK(c.seq_len == 12);
}
