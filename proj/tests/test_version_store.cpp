#include <atomic>
#include <chrono>
#include <map>
#include <random>
#include <thread>
#include <vector>

#include "doctest.h"
#include "mv/version_store.hpp"
#include "oracles.hpp"

using mv::Timestamp;
using mv::TraverseResult;
using mv::VersionList;
using mv::VersionNode;
using mv::Word;

namespace {

struct Store {
    explicit Store(uint32_t bits) : vs(bits, ebr) {}
    ~Store() { ebr.drainAll(); }

    mv::Ebr ebr{4, false, false};
    mv::VersionStore vs;
};

// Collects the (timestamp, data, tbd) chain of a list, head first.
struct Entry {
    Timestamp ts;
    Word data;
    bool tbd;
    friend bool operator==(const Entry&, const Entry&) = default;
};

std::vector<Entry> chain(const VersionList& l) {
    std::vector<Entry> out;
    for (VersionNode* n = l.head.load(); n != nullptr; n = n->older.load()) {
        out.push_back({n->timestamp(), n->data.load(), n->tbd()});
    }
    return out;
}

// Finds `count` distinct word-aligned cells in `pool` that share a slot.
std::vector<const void*> sameSlotCells(const std::vector<uint64_t>& pool, uint32_t bits, std::size_t count) {
    std::map<mv::SlotIndex, std::vector<const void*>> bySlot;
    for (const uint64_t& c : pool) {
        auto& v = bySlot[mv::hashToSlot(&c, bits)];
        v.push_back(&c);
        if (v.size() == count) return v;
    }
    return {};
}

}  // namespace

TEST_CASE("bloom tryAdd reports new bits only") {
    Store st(8);
    uint64_t x = 0;
    const mv::SlotIndex s = 5;
    CHECK(!st.vs.bloomContains(s, &x));
    CHECK(st.vs.bloomTryAdd(s, &x));
    CHECK(!st.vs.bloomTryAdd(s, &x));
    CHECK(st.vs.bloomContains(s, &x));
}

TEST_CASE("bloom false positive leads to a missed list lookup") {
    Store st(8);
    std::vector<uint64_t> pool(4096);
    const mv::SlotIndex s = 3;
    // Fill some bits, then find a cell whose bits are all covered.
    for (int i = 0; i < 6; ++i) st.vs.bloomTryAdd(s, &pool[i]);
    const void* y = nullptr;
    for (std::size_t i = 6; i < pool.size() && y == nullptr; ++i) {
        const uint64_t m = mv::VersionStore::bloomMask(&pool[i]);
        if ((st.vs.bloomBits(s) & m) == m) y = &pool[i];
    }
    REQUIRE(y != nullptr);
    CHECK(!st.vs.bloomTryAdd(s, y));
    CHECK(st.vs.bloomContains(s, y));
    CHECK(st.vs.tryGetVList(s, y) == nullptr);
}

TEST_CASE("bloom false positive rate at design load") {
    // Design load: a bucket holds a handful of versioned cells.
    constexpr int kLoad = 4;
    constexpr int kTrials = 100000;
    Store st(17);
    std::mt19937_64 rng(11);
    std::vector<uint64_t> pool(1 << 20);
    int falsePositives = 0;
    for (int t = 0; t < kTrials; ++t) {
        const auto s = static_cast<mv::SlotIndex>(t);
        std::size_t members[kLoad];
        for (auto& m : members) {
            m = rng() % pool.size();
            st.vs.bloomTryAdd(s, &pool[m]);
        }
        std::size_t probe;
        do {
            probe = rng() % pool.size();
        } while (std::find(std::begin(members), std::end(members), probe) != std::end(members));
        if (st.vs.bloomContains(s, &pool[probe])) ++falsePositives;
    }
    const double rate = static_cast<double>(falsePositives) / kTrials;
    MESSAGE("false positive rate " << rate);
    CHECK(rate < 0.05);
}

TEST_CASE("version lists of colliding cells stay separate") {
    constexpr uint32_t kBits = 1;
    Store st(kBits);
    std::vector<uint64_t> pool(64);
    const auto cells = sameSlotCells(pool, kBits, 5);
    REQUIRE(cells.size() == 5);
    const mv::SlotIndex s = mv::hashToSlot(cells[0], kBits);
    for (std::size_t i = 0; i < cells.size(); ++i) {
        CHECK(st.vs.tryGetVList(s, cells[i]) == nullptr);
        st.vs.createVersionList(s, cells[i], 1, 100 + i);
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
        VersionList* l = st.vs.tryGetVList(s, cells[i]);
        REQUIRE(l != nullptr);
        CHECK(l->cellId == cells[i]);
        CHECK(chain(*l) == std::vector<Entry>{{1, 100 + i, false}});
        CHECK(st.vs.bloomContains(s, cells[i]));
    }
    CHECK(st.vs.stats().linkedLists == 5);
    CHECK(st.vs.anyVersioned());
}

TEST_CASE("traverse examples") {
    Store st(4);
    uint64_t a = 0, b = 0, c = 0;

    VersionList* la = st.vs.createVersionList(0, &a, 4, 40);
    CHECK(chain(*la) == std::vector<Entry>{{4, 40, false}});
    VersionNode* initial = la->head.load();
    CHECK(st.vs.appendTBD(*la, 9, 90) == initial);
    CHECK(la->head.load()->older.load() == initial);
    st.vs.resolveTBD(*la, 9);
    TraverseResult r = st.vs.traverse(*la, 6);
    CHECK(r.found());
    CHECK(r.value == 40);
    r = st.vs.traverse(*la, 10);
    CHECK(r.value == 90);
    st.vs.retireNode(0, initial);

    VersionList* lb = st.vs.createVersionList(1, &b, 4, 7);
    CHECK(st.vs.traverse(*lb, 3).status == TraverseResult::Status::NoSuitableVersion);
    // Visibility is strict: a version stamped at the read clock is not visible.
    CHECK(st.vs.traverse(*lb, 4).status == TraverseResult::Status::NoSuitableVersion);
    CHECK(st.vs.traverse(*lb, 5).value == 7);

    // A reader that captured a head before its rollback skips the deleted node.
    VersionList* lc = st.vs.createVersionList(2, &c, 2, 20);
    st.ebr.enter(0);
    st.vs.appendTBD(*lc, 5, 50);
    VersionNode* captured = lc->head.load();
    st.vs.rollbackTBD(*lc, 0);
    CHECK(captured->timestamp() == mv::kDeletedTs);
    CHECK(!captured->tbd());
    VersionList stale;
    stale.head.store(captured);
    r = st.vs.traverse(stale, 5);
    CHECK(r.found());
    CHECK(r.value == 20);
    st.ebr.exit(0);
}

TEST_CASE("appendTBD pushes one node per transaction and overwrites in place") {
    Store st(4);
    uint64_t x = 0;
    VersionList* l = st.vs.createVersionList(0, &x, 3, 10);
    VersionNode* old = l->head.load();
    CHECK(st.vs.appendTBD(*l, 7, 11) == old);
    CHECK(chain(*l) == std::vector<Entry>{{7, 11, true}, {3, 10, false}});
    CHECK(st.vs.appendTBD(*l, 7, 12) == nullptr);
    CHECK(chain(*l) == std::vector<Entry>{{7, 12, true}, {3, 10, false}});
    st.vs.resolveTBD(*l, 7);
    CHECK(chain(*l) == std::vector<Entry>{{7, 12, false}, {3, 10, false}});
    st.vs.retireNode(0, old);
}

TEST_CASE("resolveTBD releases a spinning reader which then skips the newer version") {
    Store st(4);
    uint64_t x = 0;
    VersionList* l = st.vs.createVersionList(0, &x, 3, 10);
    st.vs.appendTBD(*l, 7, 11);
    std::atomic<bool> done{false};
    TraverseResult got{TraverseResult::Status::NoSuitableVersion};
    std::thread reader([&] {
        st.ebr.enter(1);
        got = st.vs.traverse(*l, 10);
        st.ebr.exit(1);
        done = true;
    });
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    CHECK(!done.load());
    st.vs.resolveTBD(*l, 12);
    reader.join();
    CHECK(got.found());
    CHECK(got.value == 10);
    CHECK(chain(*l).front() == Entry{12, 11, false});
}

TEST_CASE("rollbackTBD restores the list") {
    Store st(4);
    uint64_t x = 0;
    VersionList* l = st.vs.createVersionList(0, &x, 3, 10);
    VersionNode* old = l->head.load();
    st.vs.appendTBD(*l, 5, 11);
    st.vs.resolveTBD(*l, 5);
    st.vs.retireNode(0, old);
    const auto before = chain(*l);
    const uint64_t retired = st.ebr.retiredCount();
    st.vs.appendTBD(*l, 8, 12);
    st.vs.rollbackTBD(*l, 0);
    CHECK(chain(*l) == before);
    CHECK(st.ebr.retiredCount() == retired + 1);

    // Fresh list: the initial node survives the rollback.
    uint64_t y = 0;
    VersionList* ly = st.vs.createVersionList(1, &y, 4, 40);
    st.vs.appendTBD(*ly, 6, 41);
    st.vs.rollbackTBD(*ly, 0);
    CHECK(chain(*ly) == std::vector<Entry>{{4, 40, false}});
}

TEST_CASE("unversionBucket retires lists with all their nodes") {
    constexpr uint32_t kBits = 2;
    Store st(kBits);
    std::vector<uint64_t> pool(64);
    const auto cells = sameSlotCells(pool, kBits, 2);
    REQUIRE(cells.size() == 2);
    const mv::SlotIndex s = mv::hashToSlot(cells[0], kBits);
    Timestamp ts = 1;
    for (const void* c : cells) {
        VersionList* l = st.vs.createVersionList(s, c, ts++, 0);
        for (int i = 0; i < 2; ++i) {
            VersionNode* old = l->head.load();
            st.vs.appendTBD(*l, ts, i + 1);
            st.vs.resolveTBD(*l, ts++);
            st.vs.retireNode(0, old);
        }
        CHECK(chain(*l).size() == 3);
    }
    CHECK(st.vs.stats().liveVersionNodes == 6);
    CHECK(st.ebr.retiredCount() == 4);
    CHECK(st.vs.unversionBucket(s, 0) == 2);
    // Two lists plus six version nodes, four of which were retired as superseded.
    CHECK(st.ebr.retiredCount() == 8);
    CHECK(st.vs.bloomBits(s) == 0);
    CHECK(st.vs.bucketHead(s) == nullptr);
    CHECK(!st.vs.anyVersioned());
    st.ebr.drainAll();
    CHECK(st.vs.stats().liveVersionNodes == 0);

    const mv::SlotIndex other = (s + 1) % 4;
    CHECK(st.vs.unversionBucket(other, 0) == 0);
    CHECK(st.ebr.retiredCount() == 8);
}

TEST_CASE("latestTimestampInBucket ignores uncommitted heads") {
    constexpr uint32_t kBits = 2;
    Store st(kBits);
    std::vector<uint64_t> pool(64);
    const auto cells = sameSlotCells(pool, kBits, 2);
    REQUIRE(cells.size() == 2);
    const mv::SlotIndex s = mv::hashToSlot(cells[0], kBits);
    CHECK(st.vs.latestTimestampInBucket(s) == 0);
    st.vs.createVersionList(s, cells[0], 5, 0);
    VersionList* l = st.vs.createVersionList(s, cells[1], 9, 0);
    CHECK(st.vs.latestTimestampInBucket(s) == 9);
    st.vs.appendTBD(*l, 20, 1);
    CHECK(st.vs.latestTimestampInBucket(s) == 9);
    st.vs.rollbackTBD(*l, 0);
    CHECK(st.vs.latestTimestampInBucket(s) == 9);
}

TEST_CASE("unversionCell drops exactly one list") {
    constexpr uint32_t kBits = 1;
    Store st(kBits);
    std::vector<uint64_t> pool(64);
    const auto cells = sameSlotCells(pool, kBits, 3);
    REQUIRE(cells.size() == 3);
    const mv::SlotIndex s = mv::hashToSlot(cells[0], kBits);
    st.vs.createVersionList(s, cells[0], 1, 10);
    st.vs.createVersionList(s, cells[1], 1, 11);
    CHECK(st.vs.unversionCell(s, cells[0], 0));
    CHECK(st.vs.tryGetVList(s, cells[0]) == nullptr);
    CHECK(st.vs.tryGetVList(s, cells[1]) != nullptr);
    CHECK(!st.vs.unversionCell(s, cells[2], 0));
    CHECK(!st.vs.unversionCell(s, cells[0], 0));
    CHECK(st.vs.stats().linkedLists == 1);
}

TEST_CASE("traverse matches a shadow multiversion map") {
    const mvtest::ShadowTraverseReport r = mvtest::runShadowTraverse(10000, 3);
    MESSAGE(r.traversals << " traversals, " << r.found << " found a version");
    CHECK(r.mismatches == 0);
    CHECK(r.found > 0);
    CHECK(r.found < r.traversals);
}
