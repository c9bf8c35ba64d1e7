#include <doctest.h>

#include <sstream>

#include "matsim/errors.hpp"
#include "matsim/pdsc.hpp"

using namespace matsim;

TEST_CASE("pdsc layout is little-endian with a fixed header") {
    RowMatrix m(1, 2);
    m << 1.0, -2.5;
    std::ostringstream out;
    write_pdsc(out, m);
    const std::string bytes = out.str();
    REQUIRE(bytes.size() == 4 + 12 + 8);
    CHECK(bytes.substr(0, 4) == "PDSC");
    const unsigned char expected[] = {1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x20, 0xc0};
    for (std::size_t i = 0; i < sizeof expected; ++i) CHECK(static_cast<unsigned char>(bytes[4 + i]) == expected[i]);
}

TEST_CASE("pdsc round trip of float-representable values is exact") {
    RowMatrix m(3, 4);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(0.37 * static_cast<double>(i) - 1.1);
    std::stringstream io;
    write_pdsc(io, m);
    write_pdsc(io, m.transpose());
    CHECK(read_pdsc(io) == m);
    CHECK(read_pdsc(io) == RowMatrix(m.transpose()));
}

TEST_CASE("pdsc rejects malformed input") {
    RowMatrix m = RowMatrix::Ones(2, 2);
    std::ostringstream out;
    write_pdsc(out, m);
    const std::string good = out.str();

    SUBCASE("bad magic") {
        std::istringstream in("XDSC" + good.substr(4));
        CHECK_THROWS_AS(read_pdsc(in), ValidationError);
    }
    SUBCASE("bad version") {
        std::string bad = good;
        bad[4] = 2;
        std::istringstream in(bad);
        CHECK_THROWS_AS(read_pdsc(in), ValidationError);
    }
    SUBCASE("truncated payload") {
        std::istringstream in(good.substr(0, good.size() - 2));
        CHECK_THROWS_AS(read_pdsc(in), ValidationError);
    }
    SUBCASE("non-finite value") {
        RowMatrix nan = m;
        nan(1, 0) = std::numeric_limits<double>::quiet_NaN();
        std::ostringstream o;
        write_pdsc(o, nan);
        std::istringstream in(o.str());
        CHECK_THROWS_WITH_AS(read_pdsc(in), doctest::Contains("row 1"), ValidationError);
    }
}
