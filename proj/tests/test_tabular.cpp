#include <sstream>

#include "banditlab/tabular.hpp"
#include "test_util.hpp"

using namespace banditlab;

namespace {

Schema small_schema() {
  Schema s;
  s.features = {ColumnSpec::continuous("age", Bounds{18, 90}), ColumnSpec::categorical("kras", {"wild", "mutant"})};
  s.arm = ColumnSpec::categorical("arm", {"A", "B"});
  s.outcome = ColumnSpec::continuous("outcome", Bounds{0, 1});
  return s;
}

std::string message_of(const std::string& csv) {
  std::istringstream in(csv);
  try {
    parse_csv(in, small_schema(), "t.csv");
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Tabular, ParsesAndKeepsColumnOrderFromHeader) {
  std::istringstream in("kras,age,outcome,arm\nmutant,50,0.5,B\nwild,61.5,1,A\n");
  const auto d = parse_csv(in, small_schema());
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.rows[0].values, (std::vector<double>{50, 1}));
  EXPECT_EQ(d.rows[0].arm, 1u);
  EXPECT_DOUBLE_EQ(d.rows[1].outcome, 1.0);
  EXPECT_EQ(d.arm_counts(), (std::vector<std::size_t>{1, 1}));
}

TEST(Tabular, ErrorsCarryLineAndColumn) {
  const auto unknown = message_of("age,kras,arm,outcome\n50,wild,A,0.5\n40,KRAS?,A,0.5\n");
  EXPECT_NE(unknown.find("UnknownCategory"), std::string::npos);
  EXPECT_NE(unknown.find("line 3"), std::string::npos);
  EXPECT_NE(unknown.find("'kras'"), std::string::npos);

  const auto nonnum = message_of("age,kras,arm,outcome\nold,wild,A,0.5\n");
  EXPECT_NE(nonnum.find("NonNumeric"), std::string::npos);
  EXPECT_NE(nonnum.find("line 2"), std::string::npos);

  EXPECT_NE(message_of("age,kras,arm,outcome\n95,wild,A,0.5\n").find("OutOfBounds"), std::string::npos);
  EXPECT_NE(message_of("age,kras,arm,outcome\n50,wild,A,1.5\n").find("OutOfBounds"), std::string::npos);
  EXPECT_NE(message_of("age,kras,outcome\n50,wild,0.5\n").find("MissingColumn"), std::string::npos);
  EXPECT_NE(message_of("").find("EmptyFile"), std::string::npos);
  EXPECT_NE(message_of("age,kras,arm,outcome\n").find("EmptyFile"), std::string::npos);
  EXPECT_NE(message_of("age,kras,arm,outcome\n50,wild,A\n").find("FormatError"), std::string::npos);
}

TEST(Tabular, WriteParseRoundTripIsByteIdentical) {
  std::istringstream in("age,kras,arm,outcome\n50.25,mutant,B,0.1\n18,wild,A,0\n33.333333333333336,wild,B,1\n");
  const auto d = parse_csv(in, small_schema());
  std::ostringstream first;
  write_csv(first, d);
  std::istringstream again(first.str());
  const auto d2 = parse_csv(again, small_schema());
  EXPECT_EQ(d.rows, d2.rows);
  std::ostringstream second;
  write_csv(second, d2);
  EXPECT_EQ(first.str(), second.str());
}

TEST(Tabular, CrlfLineEndings) {
  std::istringstream in("age,kras,arm,outcome\r\n50,mutant,B,0.5\r\n");
  const auto d = parse_csv(in, small_schema());
  EXPECT_EQ(d.rows[0].values[1], 1.0);
}

TEST(Tabular, SchemaJsonRoundTripAndUnknownKeys) {
  const auto s = case_study_schema();
  const nlohmann::json j = s;
  EXPECT_EQ(j.get<Schema>(), s);

  auto bad = j;
  bad["color"] = "red";
  EXPECT_CODE(bad.get<Schema>(), ErrorCode::UnknownParameter);
  auto bad_col = j;
  bad_col["features"][0]["unit"] = "years";
  EXPECT_CODE(bad_col.get<Schema>(), ErrorCode::UnknownParameter);
}

TEST(Tabular, SchemaValidation) {
  auto s = small_schema();
  s.arm.categories = {"A"};
  EXPECT_CODE(s.validate(), ErrorCode::InvalidSchema);
  s = small_schema();
  s.features.push_back(ColumnSpec::continuous("age"));
  EXPECT_CODE(s.validate(), ErrorCode::InvalidSchema);
  s = small_schema();
  s.features[1].categories = {"x", "x"};
  EXPECT_CODE(s.validate(), ErrorCode::InvalidSchema);
  s = small_schema();
  s.outcome.bounds = Bounds{0, 2};
  EXPECT_CODE(s.validate(), ErrorCode::InvalidSchema);
}

TEST(Tabular, CaseStudySchemaShape) {
  const auto s = case_study_schema();
  s.validate();
  EXPECT_EQ(s.features.size(), 6u);
  EXPECT_EQ(s.arm_count(), 7u);
}
