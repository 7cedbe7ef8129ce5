/* Copyright 2026 the bspg authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License. */

#include <cstdio>
#include <fstream>
#include <string>

#include "bspg/config.hpp"
#include "bspg/errors.hpp"
#include "doctest.h"

using namespace bspg;

TEST_CASE("defaults match the documented schema presets") {
  Config cfg;
  CHECK(cfg.number("alpha") == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(cfg.integer("proposals") == 128);
  CHECK(cfg.text("strategy") == "mult-roi");
  CHECK(cfg.flag("bcs"));
  CHECK(cfg.flag("pg"));
  CHECK(cfg.number("lambda1") == doctest::Approx(0.5));
  CHECK(cfg.number("lambda2") == doctest::Approx(0.5));
  CHECK(cfg.integer("eval_queries") == 5);
  CHECK(cfg.integer("seed") == 0);
  CHECK_FALSE(cfg.flag("cross_image_queries"));
  for (const ConfigKey& k : config_schema()) CHECK(cfg.is_default(k.name));
}

TEST_CASE("set records the override and keeps spelling") {
  Config cfg;
  cfg.set("alpha", "0.50");
  CHECK(cfg.number("alpha") == doctest::Approx(0.5));
  CHECK(cfg.text("alpha") == "0.50");  // original spelling survives
  CHECK_FALSE(cfg.is_default("alpha"));
  CHECK(cfg.is_default("proposals"));
}

TEST_CASE("unknown keys are configuration errors naming the key") {
  Config cfg;
  try {
    cfg.set("alhpa", "0.7");
    FAIL("expected a configuration error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
    CHECK(std::string(e.what()).find("alhpa") != std::string::npos);
  }
}

TEST_CASE("type mismatches name the key and the offending value") {
  Config cfg;
  try {
    cfg.set("proposals", "many");
    FAIL("expected a configuration error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
    const std::string msg = e.what();
    CHECK(msg.find("proposals") != std::string::npos);
    CHECK(msg.find("many") != std::string::npos);
  }
  CHECK_THROWS_AS(cfg.set("bcs", "maybe"), Error);
  CHECK_THROWS_AS(cfg.set("lr", "fast"), Error);
  CHECK_THROWS_AS(cfg.set("strategy", "mult-everywhere"), Error);
}

TEST_CASE("range checks reject out-of-band values") {
  Config cfg;
  try {
    cfg.set("alpha", "1.5");
    FAIL("expected a configuration error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
    CHECK(std::string(e.what()).find("alpha") != std::string::npos);
  }
  // alpha range is exclusive at both ends.
  CHECK_THROWS_AS(cfg.set("alpha", "0"), Error);
  CHECK_THROWS_AS(cfg.set("alpha", "1"), Error);
  CHECK_NOTHROW(cfg.set("alpha", "0.9"));
  CHECK_THROWS_AS(cfg.set("proposals", "0"), Error);
  CHECK_THROWS_AS(cfg.set("proposals", "99999"), Error);
  CHECK_THROWS_AS(cfg.set("momentum", "1"), Error);  // exclusive max
  CHECK_NOTHROW(cfg.set("momentum", "0"));           // inclusive min
}

TEST_CASE("flag spellings") {
  Config cfg;
  cfg.set("bcs", "false");
  CHECK_FALSE(cfg.flag("bcs"));
  cfg.set("bcs", "1");
  CHECK(cfg.flag("bcs"));
  cfg.set("pg", "true");
  CHECK(cfg.flag("pg"));
}

TEST_CASE("parse skips comments and blanks, rejects malformed lines") {
  Config cfg = Config::parse("# run settings\n\n  alpha = 0.6\nseed=7\n");
  CHECK(cfg.number("alpha") == doctest::Approx(0.6));
  CHECK(cfg.integer("seed") == 7);

  try {
    Config::parse("alpha 0.6\n");
    FAIL("expected a configuration error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
  }
}

TEST_CASE("empty text yields pure defaults") {
  Config cfg = Config::parse("");
  CHECK(cfg.serialize() == Config().serialize());
}

TEST_CASE("serialize/parse round-trips byte for byte") {
  Config cfg;
  cfg.set("alpha", "0.55");
  cfg.set("strategy", "cat-rpn");
  cfg.set("novel_steps", "250");
  const std::string once = cfg.serialize();
  const std::string twice = Config::parse(once).serialize();
  CHECK(once == twice);
  // Every schema key appears exactly once, sorted.
  std::string prev;
  std::size_t lines = 0;
  std::stringstream ss(once);
  std::string line;
  while (std::getline(ss, line)) {
    ++lines;
    const std::string key = line.substr(0, line.find(' '));
    CHECK(prev < key);
    prev = key;
  }
  CHECK(lines == config_schema().size());
}

TEST_CASE("save and load through a file") {
  Config cfg;
  cfg.set("lr", "0.01");
  cfg.set("pg", "0");
  const std::string path = "test_config_roundtrip.cfg";
  cfg.save(path);
  Config back = Config::load(path);
  CHECK(back.serialize() == cfg.serialize());
  std::remove(path.c_str());
  CHECK_THROWS_AS(Config::load("no_such_config_file.cfg"), Error);
}

TEST_CASE("train() mirrors the optimizer keys") {
  Config cfg;
  cfg.set("epochs", "3");
  cfg.set("novel_lr", "0.004");
  cfg.set("lambda1", "0.25");
  cfg.set("cross_image_queries", "1");
  TrainConfig tc = cfg.train();
  CHECK(tc.epochs == 3);
  CHECK(tc.novel_lr == doctest::Approx(0.004f));
  CHECK(tc.lambda1 == doctest::Approx(0.25f));
  CHECK(tc.cross_image_queries);
  CHECK(tc.rpn_batch == 128);
}

TEST_CASE("model() takes geometry from the dataset description") {
  GenConfig g;
  g.image_size = 96;
  g.query_size = 48;
  g.base_classes = 9;
  Config cfg;
  cfg.set("alpha", "0.65");
  cfg.set("bcs", "0");
  ModelConfig mc = cfg.model(g);
  CHECK(mc.image_size == 96);
  CHECK(mc.query_size == 48);
  CHECK(mc.base_class_count == 9);
  CHECK(mc.alpha == doctest::Approx(0.65f));
  CHECK_FALSE(mc.bcs_enabled);
  CHECK(mc.pg_enabled);
  CHECK(mc.proposal_count == 128);
}
