#include <chrono>
#include <ctime>
#include <filesystem>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "depthprior/io.hpp"
#include "support/temp_dir.hpp"

using namespace depthprior;

TEST(DepthMapFormat, SmallMapRoundTrips) {
    const DepthMap map(2, 2, {0.f, 1.f, 2.f, 3.f});
    const auto bytes = io::encode_depth_map(map);
    ASSERT_EQ(bytes.size(), 12u + 16u);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "DPM1");
    // width 2, little-endian
    EXPECT_EQ(bytes[4], 2);
    EXPECT_EQ(bytes[5], 0);
    const auto back = io::decode_depth_map(bytes);
    EXPECT_EQ(back.width(), 2u);
    EXPECT_EQ(back.height(), 2u);
    EXPECT_EQ(std::vector<float>(back.values().begin(), back.values().end()), (std::vector<float>{0, 1, 2, 3}));
}

TEST(DepthMapFormat, FloatBitsAreLittleEndian) {
    const DepthMap map(1, 1, {1.0f});
    const auto bytes = io::encode_depth_map(map);
    // 1.0f == 0x3F800000
    EXPECT_EQ(bytes[12], 0x00);
    EXPECT_EQ(bytes[13], 0x00);
    EXPECT_EQ(bytes[14], 0x80);
    EXPECT_EQ(bytes[15], 0x3F);
}

TEST(DepthMapFormat, RejectsBadMagic) {
    auto bytes = io::encode_depth_map(DepthMap(2, 2, {0.f, 1.f, 2.f, 3.f}));
    bytes[3] = '0';
    try {
        io::decode_depth_map(bytes);
        FAIL() << "expected format error";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("byte 0"), std::string::npos);
    }
}

TEST(DepthMapFormat, RejectsTruncatedPayload) {
    auto bytes = io::encode_depth_map(DepthMap(2, 2, {0.f, 1.f, 2.f, 3.f}));
    bytes.resize(bytes.size() - 3);
    try {
        io::decode_depth_map(bytes);
        FAIL() << "expected format error";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
    }
}

TEST(DepthMapFormat, RejectsNonFiniteWithOffset) {
    auto bytes = io::encode_depth_map(DepthMap(2, 1, {0.f, 1.f}));
    // second value := +inf (0x7F800000)
    bytes[16] = 0x00;
    bytes[17] = 0x00;
    bytes[18] = 0x80;
    bytes[19] = 0x7F;
    try {
        io::decode_depth_map(bytes);
        FAIL() << "expected format error";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("byte 16"), std::string::npos);
    }
}

TEST(DepthMapFormat, LargeConstantMapIsFastAndBitExact) {
    test::TempDir dir;
    const auto path = dir.path() / "big.dpm";
    const auto map = DepthMap::constant(4096, 4096, 1.0f);
    io::write_depth_map(map, path);
    // CPU time, so a loaded machine running tests in parallel does not skew it.
    const auto t0 = std::clock();
    const auto back = io::read_depth_map(path);
    const double elapsed = static_cast<double>(std::clock() - t0) / CLOCKS_PER_SEC;
    EXPECT_LT(elapsed, 1.0);
    EXPECT_EQ(back, map);
    EXPECT_EQ(io::encode_depth_map(back), io::detail::read_file_bytes(path));
}

TEST(DepthMapFormat, RandomMapsReencodeToSameBytes) {
    std::mt19937 rng(7);
    std::uniform_int_distribution<std::uint32_t> dim(1, 40);
    std::uniform_real_distribution<float> val(0.f, 1000.f);
    for (int trial = 0; trial < 50; ++trial) {
        const auto w = dim(rng), h = dim(rng);
        std::vector<float> v(std::size_t{w} * h);
        for (auto& x : v) x = val(rng);
        const auto bytes = io::encode_depth_map(DepthMap(w, h, v));
        EXPECT_EQ(io::encode_depth_map(io::decode_depth_map(bytes)), bytes);
    }
}

TEST(DetectionsJsonl, ParsesOneRecord) {
    std::istringstream in(R"({"image":"a","x1":0,"y1":0,"x2":10,"y2":10,"score":0.5,"class":0})" "\n");
    const auto dets = io::read_detections(in);
    ASSERT_EQ(dets.size(), 1u);
    EXPECT_EQ(dets[0], (Detection{"a", {0, 0, 10, 10}, 0.5, 0}));
}

TEST(DetectionsJsonl, ScoreOutsideUnitIntervalIsDomainError) {
    std::istringstream in(R"({"image":"a","x1":0,"y1":0,"x2":10,"y2":10,"score":1.5,"class":0})");
    EXPECT_THROW(io::read_detections(in), DomainError);
}

TEST(DetectionsJsonl, DegenerateBoxRejectedWithLineNumber) {
    std::istringstream in(R"({"image":"a","x1":0,"y1":0,"x2":10,"y2":10,"score":0.5,"class":0})"
                          "\n"
                          R"({"image":"a","x1":5,"y1":0,"x2":5,"y2":10,"score":0.5,"class":0})");
    try {
        io::read_detections(in);
        FAIL() << "expected domain error";
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
}

TEST(DetectionsJsonl, MalformedLineIsFormatErrorWithLineNumber) {
    std::istringstream in("\n{\"image\":\"a\",\"x1\":0,\n");
    try {
        io::read_detections(in);
        FAIL() << "expected format error";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
}

TEST(DetectionsJsonl, GroundTruthHasNoScore) {
    std::istringstream in(R"({"image":"b","x1":1.5,"y1":2,"x2":3,"y2":4.25,"class":3})");
    const auto gts = io::read_groundtruth(in);
    ASSERT_EQ(gts.size(), 1u);
    EXPECT_EQ(gts[0], (GroundTruthBox{"b", {1.5, 2, 3, 4.25}, 3}));
}

TEST(DetectionsJsonl, HundredThousandRecordsRoundTrip) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Detection> dets(100000);
    for (std::size_t i = 0; i < dets.size(); ++i) {
        const double x = u(rng) * 500, y = u(rng) * 300;
        dets[i] = {"img" + std::to_string(i % 97), {x, y, x + 1 + u(rng) * 50, y + 1 + u(rng) * 50}, u(rng),
                   static_cast<std::uint32_t>(i % 5)};
    }
    const auto text = io::to_jsonl(std::span<const Detection>(dets));
    std::istringstream in(text);
    const auto back = io::read_detections(in);
    EXPECT_EQ(back, dets);
    EXPECT_EQ(io::to_jsonl(std::span<const Detection>(back)), text);
}

TEST(LookupTableJson, SingleZeroEntryRoundTrips) {
    const LookupTable table({ThresholdCurve::flat(0.7, 10)}, LutFitConfig{});
    const auto back = io::lookup_table_from_string(io::lookup_table_to_string(table));
    EXPECT_EQ(back, table);
}

TEST(LookupTableJson, DuplicateKeysRejected) {
    const std::string text = R"({"format":"depthprior-lut-v1","fit_config":{},"entries":[
        {"tau0":0.5,"knot_domain":[0,0.9],"psi":[0,0,0,0],"rho":0.1},
        {"tau0":0.5,"knot_domain":[0,0.9],"psi":[0,0,0,0],"rho":0.1}]})";
    EXPECT_THROW(io::lookup_table_from_string(text), FormatError);
}

TEST(LookupTableJson, UnknownFormatTagRejected) {
    EXPECT_THROW(io::lookup_table_from_string(R"({"format":"other","entries":[]})"), FormatError);
}

TEST(LookupTableJson, RandomTablesRoundTripValueExact) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<ThresholdCurve> entries;
        for (int r = 1; r <= 9; ++r) {
            ThresholdCurve c = ThresholdCurve::flat(r / 10.0, 10);
            for (auto& p : c.psi) p = u(rng) * 0.3;
            c.rho = u(rng) * 0.1;
            entries.push_back(c);
        }
        LutFitConfig cfg;
        cfg.seed = rng();
        cfg.epsilon = u(rng);
        const LookupTable table(entries, cfg);
        test::TempDir dir;
        io::write_lookup_table(table, dir.path() / "lut.json");
        EXPECT_EQ(io::read_lookup_table(dir.path() / "lut.json"), table);
    }
}

TEST(LookupTable, MissingKeyListsAvailable) {
    const LookupTable table({ThresholdCurve::flat(0.5, 4), ThresholdCurve::flat(0.7, 4)}, {});
    try {
        (void)table.at(0.6);
        FAIL() << "expected lookup error";
    } catch (const LookupError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("0.5"), std::string::npos);
        EXPECT_NE(msg.find("0.7"), std::string::npos);
    }
}

TEST(WeightRecords, RoundTrip) {
    const std::vector<WeightRecord> recs{{"a", 0, 0.25, 1.0 + std::exp(0.25)}, {"b", 3, 1.0, 3.718281828459045}};
    std::istringstream in(io::to_jsonl(std::span<const WeightRecord>(recs)));
    EXPECT_EQ(io::read_weight_records(in), recs);
}
