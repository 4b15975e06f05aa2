#include <sstream>
#include <vector>

#include "doctest.h"
#include "mv/history.hpp"
#include "mv/opacity.hpp"
#include "mv/stress.hpp"
#include "oracles.hpp"

using mv::EventKind;
using mv::History;

namespace {

using Builder = mvtest::HistoryBuilder;
constexpr uint64_t X = mvtest::kCellX;
constexpr uint64_t Y = mvtest::kCellY;

}  // namespace

TEST_CASE("checker accepts a writer followed by a reader") {
    Builder b;
    b.begin(1).write(1, X, 1).commit(1).begin(2).read(2, X, 1).commit(2);
    const auto v = mv::checkOpacity(b.history());
    REQUIRE(v.ok());
    CHECK(v.witness == std::vector<uint64_t>{1, 2});
}

TEST_CASE("checker rejects a torn snapshot") {
    Builder b;
    b.begin(2).read(2, X, 0);
    b.begin(1).write(1, X, 1).write(1, Y, 1).commit(1);
    b.read(2, Y, 1).commit(2);
    const auto v = mv::checkOpacity(b.history());
    CHECK(v.status == mv::OpacityVerdict::Status::Violation);
}

TEST_CASE("checker rejects a zombie read in an aborted attempt") {
    Builder b;
    b.begin(2).read(2, X, 0);
    b.begin(1).write(1, X, 1).write(1, Y, 1).commit(1);
    b.read(2, Y, 1).abort(2);
    const auto v = mv::checkOpacity(b.history());
    CHECK(v.status == mv::OpacityVerdict::Status::Violation);
    CHECK(v.message.find("aborted") != std::string::npos);
}

TEST_CASE("checker rejects committed write skew") {
    Builder b;
    b.begin(1).begin(2);
    b.read(1, X, 0).read(2, Y, 0);
    b.write(1, Y, 1).write(2, X, 2);
    b.commit(1).commit(2);
    CHECK_FALSE(mv::checkOpacity(b.history()).ok());
}

TEST_CASE("checker rejects a real-time inversion") {
    // T2 starts after T1 committed yet observes the value T1 overwrote.
    Builder b;
    b.begin(1).write(1, X, 1).commit(1);
    b.begin(2).read(2, X, 0).commit(2);
    CHECK_FALSE(mv::checkOpacity(b.history()).ok());
}

TEST_CASE("checker rejects a read of a value never written") {
    Builder b;
    b.begin(1).read(1, X, 42).commit(1);
    CHECK_FALSE(mv::checkOpacity(b.history()).ok());
}

TEST_CASE("checker orders concurrent transactions freely") {
    // T2 reads the old value although T1 committed first in real time of the
    // commit events; both overlap, so T2 serializes before T1.
    Builder b;
    b.begin(1).begin(2).read(2, X, 0).write(1, X, 1).commit(1).commit(2);
    const auto v = mv::checkOpacity(b.history());
    REQUIRE(v.ok());
    CHECK(v.witness == std::vector<uint64_t>{2, 1});
}

TEST_CASE("checker honors own writes and initial values") {
    Builder b;
    b.begin(1).read(1, X, 7).write(1, X, 8).read(1, X, 8).commit(1);
    CHECK(mv::checkOpacity(b.history(), {{X, 7}}).ok());
    CHECK_FALSE(mv::checkOpacity(b.history()).ok());
}

TEST_CASE("checker reports size exceeded") {
    Builder b;
    for (uint64_t t = 1; t <= 9; ++t) b.begin(t).write(t, X, t).commit(t);
    CHECK(mv::checkOpacity(b.history()).status == mv::OpacityVerdict::Status::SizeExceeded);
    Builder c;
    c.begin(1);
    for (uint64_t cell = 1; cell <= 9; ++cell) c.read(1, cell, 0);
    c.commit(1);
    CHECK(mv::checkOpacity(c.history()).status == mv::OpacityVerdict::Status::SizeExceeded);
}

TEST_CASE("checker rejects malformed histories") {
    Builder b;
    b.read(1, X, 0);
    CHECK_THROWS_AS(mv::checkOpacity(b.history()), std::invalid_argument);
    Builder c;
    c.begin(1).commit(1).read(1, X, 0);
    CHECK_THROWS_AS(mv::checkOpacity(c.history()), std::invalid_argument);
}

TEST_CASE("checker accepts every serial history at tiny sizes") {
    const mvtest::SerialSweep r = mvtest::sweepSerialHistories();
    CHECK_MESSAGE(r.rejected == 0, r.firstRejection);
    CHECK(r.checked == 20u * 20u * 20u * 8u);
}

TEST_CASE("checker rejects every curated bad history") {
    for (const auto& h : mvtest::curatedBadHistories()) {
        CAPTURE(h.name);
        CHECK(!mv::checkOpacity(h.history, h.initial).ok());
    }
}

TEST_CASE("history round trips through the line format") {
    Builder b;
    b.begin(1).read(1, X, 3).write(1, Y, 4).commit(1).begin(2, 1).abort(2, 1);
    std::stringstream ss;
    mv::writeHistory(ss, b.history());
    const History back = mv::readHistory(ss);
    CHECK(back == b.history());
    std::stringstream bad("0 1 0 nonsense 0 0\n");
    CHECK_THROWS_AS(mv::readHistory(bad), std::runtime_error);
}

TEST_CASE("recorder orders events from two threads") {
    mv::HistoryRecorder r(2);
    const uint64_t a = r.newTxnId();
    const uint64_t b = r.newTxnId();
    r.begin(0, a, 0);
    r.begin(1, b, 0);
    r.read(0, reinterpret_cast<void*>(8), 1);
    r.commit(1);
    r.commit(0);
    const History h = r.collect();
    REQUIRE(h.size() == 5);
    for (std::size_t i = 0; i < h.size(); ++i) CHECK(h[i].seq == i);
    CHECK(h[2].txn == a);
    CHECK(h[3].txn == b);
}

TEST_CASE_TEMPLATE("stress windows stay opaque", TM, mv::Multiverse, mv::Dctl) {
    mv::StressOptions o;
    o.windows = 200;
    const auto rep = mv::stressAndCheck<TM>(o);
    CHECK(rep.windows == 200);
    CHECK_MESSAGE(rep.violations == 0, rep.firstViolation);
    CHECK(rep.sizeExceeded == 0);
}

TEST_CASE("stress windows stay opaque under forced mode cycling") {
    mv::StressOptions o;
    o.windows = 200;
    o.threads = 4;
    o.txnsPerThread = 2;
    o.forceModeCycling = true;
    const auto rep = mv::stressAndCheck<mv::Multiverse>(o);
    CHECK_MESSAGE(rep.violations == 0, rep.firstViolation);
    CHECK(rep.modeCycles > 0);
}

TEST_CASE_TEMPLATE("stress detects skipped revalidation", TM, mv::Multiverse, mv::Dctl) {
    mv::StressOptions o;
    o.windows = 100;
    o.mutation = true;
    o.stopOnViolation = true;
    const auto rep = mv::stressAndCheck<TM>(o);
    CHECK(rep.violations > 0);
}
