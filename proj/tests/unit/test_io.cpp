#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "ncsres/io.hpp"
#include "support/fixtures.hpp"

using namespace ncsres;

namespace {

std::string temp_file(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("ncsres_test_" + name)).string();
}

const char* kScalarDoc = R"({
  "plant": {"A": [[-1]], "B": [[1]], "C": [[1]], "W": [[1]]},
  "controller": {"A": [[-1]], "B": [[1]], "C": [[-2]], "D": [[0]]},
  "performance": {"Co": [[1, 0]]},
  "network": {"Ts": 0.1}
})";

}  // namespace

TEST(LoadModel, MinimalDocumentRoundTrips) {
  const auto m = parse_model(kScalarDoc);
  const auto path = temp_file("model.json");
  save_model(m, path);
  const auto back = load_model(path);
  EXPECT_EQ(back.plant.A, m.plant.A);
  EXPECT_EQ(back.plant.W, m.plant.W);
  EXPECT_EQ(back.controller.C, m.controller.C);
  EXPECT_EQ(back.performance.Co, m.performance.Co);
  EXPECT_EQ(back.network.Ts, 0.1);
  std::remove(path.c_str());
}

TEST(LoadModel, BatchReactorRoundTripIsExact) {
  const auto m = fixtures::batch_reactor();
  const auto path = temp_file("br.json");
  save_model(m, path);
  const auto back = load_model(path);
  EXPECT_EQ(back.plant.A, m.plant.A);
  EXPECT_EQ(back.controller.D, m.controller.D);
  EXPECT_FALSE(back.provenance.empty());
  std::remove(path.c_str());
}

TEST(LoadModel, MissingCpIsNamed) {
  auto doc = json::parse(kScalarDoc);
  doc["plant"].erase("C");
  try {
    model_from_json(doc);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("C_p"), std::string::npos) << e.what();
  }
}

TEST(LoadModel, ParseErrorsCarryLineNumbers) {
  const std::string broken = "{\n  \"plant\": {\n    \"A\": [[1,]]\n  }\n}";
  try {
    parse_model(broken, "doc.json");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("doc.json:3"), std::string::npos) << e.what();
  }
}

TEST(LoadModel, FieldErrors) {
  auto doc = json::parse(kScalarDoc);
  doc["plant"]["A"] = {{1, "x"}};
  EXPECT_THROW(model_from_json(doc), ParseError);
  doc = json::parse(kScalarDoc);
  doc["plant"]["A"] = {{1, 2}, {3}};
  EXPECT_THROW(model_from_json(doc), ParseError);
  doc = json::parse(kScalarDoc);
  doc["plant"]["B"] = {{1}, {2}};
  EXPECT_THROW(model_from_json(doc), DimensionError);
  doc = json::parse(kScalarDoc);
  doc["network"]["Tmad"] = 0.5;
  EXPECT_THROW(model_from_json(doc), ValidationError);
  EXPECT_THROW(load_model("/nonexistent/model.json"), ParseError);
}

TEST(ScheduleIo, RoundTripAndIndexCheck) {
  AttackSchedule s;
  s.entries = {ScheduleEntry::drop(), ScheduleEntry::deliver(0.001), ScheduleEntry::deliver(0.0)};
  const auto path = temp_file("sched.json");
  save_schedule(s, path);
  EXPECT_EQ(load_schedule(path), s);
  std::remove(path.c_str());

  json bad = schedule_to_json(s);
  bad[1]["k"] = 7;
  EXPECT_THROW(schedule_from_json(bad), ParseError);
  bad = schedule_to_json(s);
  bad[0]["action"] = "jam";
  EXPECT_THROW(schedule_from_json(bad), ParseError);
}

TEST(CertificateIo, RoundTripIsBitExact) {
  fixtures::Gen g(51);
  Certificate c{{g.spd(6), g.spd(2), g.spd(2), g.spd(2), g.spd(2), 12.345678901234567, 5.0},
                NetworkParams{0.01, 2, 0.0031835937500000002},
                StabilityMode::InputOutput};
  const auto path = temp_file("cert.json");
  save_certificate(c, path);
  const auto back = load_certificate(path);
  EXPECT_EQ(back.params.P1, c.params.P1);
  EXPECT_EQ(back.params.P3_1, c.params.P3_1);
  EXPECT_EQ(back.params.delta, c.params.delta);
  EXPECT_EQ(back.net.Tmad, c.net.Tmad);
  EXPECT_EQ(back.mode, c.mode);
  std::remove(path.c_str());
  json j = certificate_to_json(c);
  j.erase("P2_0");
  EXPECT_THROW(certificate_from_json(j), ParseError);
}

TEST(FormatDouble, ShortestRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.0, -0.0031835937500000002})
    EXPECT_EQ(std::strtod(format_double(v).c_str(), nullptr), v);
  EXPECT_EQ(format_double(0.01), "0.01");
}
