#include <atomic>
#include <chrono>
#include <random>
#include <set>
#include <thread>
#include <vector>

#include "bank.hpp"
#include "doctest.h"
#include "mv/dctl.hpp"
#include "mv/multiverse.hpp"

namespace {

mv::Config smallConfig() {
    mv::Config c;
    c.tableBits = 12;
    c.maxThreads = 16;
    return c;
}

mv::Config modeConfig(mv::FixedMode m) {
    mv::Config c = smallConfig();
    c.fixedMode = m;
    return c;
}

// Adaptive runtime that versions and cycles modes at the slightest conflict.
mv::Config eagerConfig() {
    mv::Config c = smallConfig();
    c.heuristics.k1 = 1;
    c.heuristics.k2 = 1;
    c.heuristics.k3 = 1;
    c.heuristics.s = 2;
    c.heuristics.l = 4;
    c.heuristics.scanPeriod = std::chrono::milliseconds(1);
    return c;
}

// Committed (timestamp, data) pairs of a cell's version list, head first.
std::vector<std::pair<mv::Timestamp, mv::Word>> versions(mv::Multiverse& tm, const mv::Cell& c) {
    std::vector<std::pair<mv::Timestamp, mv::Word>> out;
    const mv::VersionList* l = tm.versionStore().tryGetVList(tm.lockTable().slotFor(&c), &c);
    if (l == nullptr) return out;
    for (mv::VersionNode* n = l->head.load(); n != nullptr; n = n->older.load()) {
        out.emplace_back(n->timestamp(), n->data.load());
    }
    return out;
}

}  // namespace

TEST_CASE_TEMPLATE("single thread read write commit", TM, mv::Multiverse, mv::Dctl) {
    TM tm(smallConfig());
    auto th = tm.registerThread();
    mv::TCell<int64_t> a(5), b(7);
    const int64_t sum = tm.run(th, [&](typename TM::Tx& tx) { return tx.load(a) + tx.load(b); });
    CHECK(sum == 12);
    tm.run(th, [&](typename TM::Tx& tx) {
        tx.store(a, tx.load(a) + 1);
        tx.store(b, tx.load(b) - 1);
    });
    CHECK(a.unsafeGet() == 6);
    CHECK(b.unsafeGet() == 6);
    if constexpr (std::is_same_v<TM, mv::Multiverse>) {
        CHECK(tm.stats().tx.aborts == 0);
    } else {
        CHECK(tm.stats().aborts == 0);
    }
}

TEST_CASE_TEMPLATE("user exception rolls back", TM, mv::Multiverse, mv::Dctl) {
    TM tm(smallConfig());
    auto th = tm.registerThread();
    mv::TCell<int64_t> a(1);
    CHECK_THROWS_AS(tm.run(th,
                           [&](typename TM::Tx& tx) {
                               tx.store(a, int64_t{99});
                               throw std::runtime_error("boom");
                           }),
                    std::runtime_error);
    CHECK(a.unsafeGet() == 1);
    const int64_t v = tm.run(th, [&](typename TM::Tx& tx) { return tx.load(a); });
    CHECK(v == 1);
}

TEST_CASE_TEMPLATE("read own writes", TM, mv::Multiverse, mv::Dctl) {
    TM tm(smallConfig());
    auto th = tm.registerThread();
    mv::TCell<int64_t> a(1);
    const int64_t v = tm.run(th, [&](typename TM::Tx& tx) {
        tx.store(a, int64_t{42});
        const int64_t first = tx.load(a);
        tx.store(a, first + 1);
        return tx.load(a);
    });
    CHECK(v == 43);
    CHECK(a.unsafeGet() == 43);
}

TEST_CASE("read own writes on the versioned paths") {
    for (mv::FixedMode m : {mv::FixedMode::QOnly, mv::FixedMode::UOnly}) {
        mv::Multiverse tm(modeConfig(m));
        auto th = tm.registerThread();
        mv::TCell<int64_t> a(1);
        tm.run(th, [&](mv::Multiverse::Tx& tx) { tx.store(a, int64_t{2}); });
        const int64_t v = tm.run(th, [&](mv::Multiverse::Tx& tx) {
            tx.store(a, int64_t{5});
            return tx.load(a);
        });
        CHECK(v == 5);
        // A later versioned reader sees the committed value.
        int attempt = 0;
        const int64_t r = tm.run(
            th,
            [&](mv::Multiverse::Tx& tx) {
                if (attempt++ < 200 && !tx.versioned()) throw mv::TxAbort{};
                return tx.load(a);
            },
            mv::TxHint::ReadOnly);
        CHECK(r == 5);
    }
}

TEST_CASE("a read-only operation goes versioned after K1 aborts") {
    mv::Config cfg = modeConfig(mv::FixedMode::QOnly);
    cfg.heuristics.k1 = 3;
    mv::Multiverse tm(cfg);
    auto th = tm.registerThread();
    mv::TCell<int64_t> a(7);
    std::vector<bool> versionedAt;
    const int64_t v = tm.run(th, [&](mv::Multiverse::Tx& tx) {
        versionedAt.push_back(tx.versioned());
        const int64_t x = tx.load(a);
        if (!tx.versioned()) throw mv::TxAbort{};
        return x;
    });
    CHECK(v == 7);
    CHECK(versionedAt == std::vector<bool>{false, false, false, true});
    CHECK(tm.stats().tx.versionedCommits == 1);
    // Reading it on the versioned path created a version list at the lock version.
    const auto vs = versions(tm, a);
    REQUIRE(vs.size() == 1);
    CHECK(vs[0].second == 7);
}

TEST_CASE("default K1 switches at the hundredth abort") {
    mv::Multiverse tm(modeConfig(mv::FixedMode::QOnly));
    auto th = tm.registerThread();
    mv::TCell<int64_t> a(7);
    uint32_t firstVersioned = 0;
    tm.run(th, [&](mv::Multiverse::Tx& tx) {
        tx.load(a);
        if (!tx.versioned()) throw mv::TxAbort{};
        firstVersioned = tx.attempts();
    });
    CHECK(firstVersioned == 100);
}

TEST_CASE("update hint never goes versioned") {
    mv::Config cfg = modeConfig(mv::FixedMode::QOnly);
    cfg.heuristics.k1 = 1;
    mv::Multiverse tm(cfg);
    auto th = tm.registerThread();
    mv::TCell<int64_t> a(7);
    int attempts = 0;
    tm.run(
        th,
        [&](mv::Multiverse::Tx& tx) {
            CHECK(!tx.versioned());
            tx.load(a);
            if (++attempts < 5) throw mv::TxAbort{};
        },
        mv::TxHint::Update);
    CHECK(tm.stats().tx.versionedCommits == 0);
}

TEST_CASE("Mode Q writes to unversioned cells stay in place") {
    mv::Multiverse tm(modeConfig(mv::FixedMode::QOnly));
    auto th = tm.registerThread();
    mv::TCell<int64_t> a(1), b(2);
    for (int i = 0; i < 10; ++i) {
        tm.run(th, [&](mv::Multiverse::Tx& tx) {
            tx.store(a, tx.load(a) + 1);
            tx.store(b, tx.load(b) + 1);
        });
    }
    CHECK(tm.stats().versionedCells == 0);
    CHECK(tm.stats().liveVersionNodes == 0);
    CHECK(a.unsafeGet() == 11);
}

TEST_CASE("Mode U writers version the pre-write value") {
    mv::Multiverse tm(modeConfig(mv::FixedMode::UOnly));
    auto th = tm.registerThread();
    mv::TCell<int64_t> a(10);
    const mv::Timestamp before = tm.stats().clock;
    tm.run(th, [&](mv::Multiverse::Tx& tx) { tx.store(a, int64_t{11}); });
    const auto vs = versions(tm, a);
    REQUIRE(vs.size() == 2);
    CHECK(vs[0].second == 11);
    CHECK(vs[1].second == 10);
    CHECK(vs[1].first <= before);
    // The commit does not advance the clock, so the two stamps may tie; the
    // head still wins for every reader that can see either.
    CHECK(vs[0].first >= vs[1].first);
    // Versioned cells in Mode Q get a new version on every write.
    tm.run(th, [&](mv::Multiverse::Tx& tx) { tx.store(a, int64_t{12}); });
    CHECK(versions(tm, a).front().second == 12);
}

TEST_CASE("Mode Q writes append to already versioned cells") {
    mv::Config cfg = modeConfig(mv::FixedMode::QOnly);
    cfg.heuristics.k1 = 1;
    mv::Multiverse tm(cfg);
    auto th = tm.registerThread();
    mv::TCell<int64_t> a(10);
    tm.run(th, [&](mv::Multiverse::Tx& tx) {
        const int64_t x = tx.load(a);
        if (!tx.versioned()) throw mv::TxAbort{};
        return x;
    });
    REQUIRE(versions(tm, a).size() == 1);
    tm.run(th, [&](mv::Multiverse::Tx& tx) { tx.store(a, int64_t{11}); });
    const auto vs = versions(tm, a);
    REQUIRE(vs.size() == 2);
    CHECK(vs[0].second == 11);
    CHECK(vs[1].second == 10);
}

TEST_CASE_TEMPLATE("aborted writers restore values and bump their lock versions", TM, mv::Multiverse, mv::Dctl) {
    TM tm(smallConfig());
    auto th = tm.registerThread();
    mv::TCell<int64_t> a(1), b(2);
    auto& locks = tm.lockTable();
    const mv::Timestamp va = locks.load(locks.slotFor(&a)).version();
    int attempt = 0;
    tm.run(th, [&](typename TM::Tx& tx) {
        tx.store(a, int64_t{10});
        tx.store(b, int64_t{20});
        if (attempt++ == 0) {
            // Mid-attempt the writes are in place and the slots are ours.
            CHECK(a.unsafeGet() == 10);
            CHECK(locks.load(locks.slotFor(&a)).locked());
            throw mv::TxAbort{};
        }
        CHECK(a.unsafeGet() == 10);
    });
    CHECK(attempt == 2);
    CHECK(a.unsafeGet() == 10);
    CHECK(b.unsafeGet() == 20);
    const mv::LockWord wa = locks.load(locks.slotFor(&a));
    const mv::LockWord wb = locks.load(locks.slotFor(&b));
    CHECK(!wa.locked());
    CHECK(wa.version() > va);
    CHECK(wa.version() == wb.version());
}

TEST_CASE_TEMPLATE("abort leaves no trace", TM, mv::Multiverse, mv::Dctl) {
    TM tm(smallConfig());
    auto th = tm.registerThread();
    mv::TCell<int64_t> a(1), b(2);
    CHECK_THROWS(tm.run(th, [&](typename TM::Tx& tx) {
        tx.store(a, int64_t{10});
        tx.store(b, tx.load(a) + 5);
        throw std::runtime_error("cancel");
    }));
    CHECK(a.unsafeGet() == 1);
    CHECK(b.unsafeGet() == 2);
    auto& locks = tm.lockTable();
    CHECK(!locks.load(locks.slotFor(&a)).locked());
    CHECK(!locks.load(locks.slotFor(&b)).locked());
}

TEST_CASE("abort in Mode U leaves version lists as they were") {
    mv::Multiverse tm(modeConfig(mv::FixedMode::UOnly));
    auto th = tm.registerThread();
    mv::TCell<int64_t> a(1), b(2), c(3);
    tm.run(th, [&](mv::Multiverse::Tx& tx) { tx.store(a, int64_t{4}); });
    const auto va = versions(tm, a);
    const uint64_t cellsBefore = tm.stats().versionedCells;
    CHECK_THROWS(tm.run(th, [&](mv::Multiverse::Tx& tx) {
        tx.store(a, int64_t{5});
        tx.store(b, int64_t{6});
        throw std::runtime_error("cancel");
    }));
    CHECK(versions(tm, a) == va);
    CHECK(a.unsafeGet() == 4);
    CHECK(b.unsafeGet() == 2);
    // b may now carry a list holding only its committed value.
    const auto vb = versions(tm, b);
    CHECK(vb.size() <= 1);
    if (!vb.empty()) CHECK(vb[0].second == 2);
    CHECK(versions(tm, c).empty());
    CHECK(tm.stats().versionedCells >= cellsBefore);
}

TEST_CASE_TEMPLATE("a writer whose read slot is taken by another thread aborts", TM, mv::Multiverse, mv::Dctl) {
    TM tm(smallConfig());
    auto th = tm.registerThread();
    mv::TCell<int64_t> a(1), b(2);
    auto& locks = tm.lockTable();
    const mv::SlotIndex sa = locks.slotFor(&a);
    REQUIRE(sa != locks.slotFor(&b));
    constexpr mv::ThreadId kIntruder = 15;
    int attempt = 0;
    mv::LockWord held{};
    tm.run(
        th,
        [&](typename TM::Tx& tx) {
            if (attempt++ == 1) locks.unlock(sa, held.version());
            const int64_t x = tx.load(a);
            tx.store(b, x + 1);
            if (attempt == 1) {
                held = locks.load(sa);
                REQUIRE(locks.tryLock(sa, held, kIntruder));
            }
        },
        mv::TxHint::Update);
    CHECK(attempt == 2);
    CHECK(b.unsafeGet() == 2);
}

TEST_CASE_TEMPLATE("weak progressiveness: disjoint transactions never abort", TM, mv::Multiverse, mv::Dctl) {
    mv::Config cfg = smallConfig();
    cfg.tableBits = 16;
    TM tm(cfg);
    constexpr int kThreads = 4;
    constexpr int kCells = 8;
    std::vector<std::unique_ptr<mv::TCell<int64_t>[]>> cells;
    std::set<mv::SlotIndex> slots;
    for (int t = 0; t < kThreads; ++t) {
        cells.emplace_back(new mv::TCell<int64_t>[kCells]);
        for (int i = 0; i < kCells; ++i) slots.insert(tm.lockTable().slotFor(&cells[t][i]));
    }
    REQUIRE(slots.size() == std::size_t{kThreads} * kCells);
    std::vector<std::thread> ts;
    for (int t = 0; t < kThreads; ++t) {
        ts.emplace_back([&, t] {
            auto th = tm.registerThread();
            for (int n = 0; n < 5000; ++n) {
                tm.run(th, [&](typename TM::Tx& tx) {
                    for (int i = 0; i < kCells; ++i) tx.store(cells[t][i], tx.load(cells[t][i]) + 1);
                });
                if (n % 50 == 0) std::this_thread::yield();
                tm.run(th, [&](typename TM::Tx& tx) {
                    int64_t s = 0;
                    for (int i = 0; i < kCells; ++i) s += tx.load(cells[t][i]);
                    return s;
                });
            }
        });
    }
    for (auto& t : ts) t.join();
    CHECK(mv::snapshot(tm).aborts == 0);
    for (int t = 0; t < kThreads; ++t) CHECK(cells[t][0].unsafeGet() == 5000);
}

TEST_CASE_TEMPLATE("sum conservation under concurrent transfers", TM, mv::Multiverse, mv::Dctl) {
    mvtest::BankOptions o;
    o.accounts = 16;
    o.threads = 4;
    o.readers = 2;
    o.seconds = 0.6;
    for (const bool versioned : {false, true}) {
        CAPTURE(versioned);
        o.versionedReaders = versioned;
        TM tm(smallConfig());
        const mvtest::BankResult r = mvtest::runBank(tm, o);
        CHECK(r.violations == 0);
        CHECK(r.finalTotalOk);
        CHECK(r.snapshots > 0);
        CHECK(r.transfers > 0);
    }
}

TEST_CASE("sum conservation in every mode configuration") {
    mvtest::BankOptions o;
    o.accounts = 16;
    o.threads = 4;
    o.readers = 2;
    o.seconds = 0.6;
    const mv::Config configs[] = {modeConfig(mv::FixedMode::QOnly), modeConfig(mv::FixedMode::UOnly), eagerConfig()};
    for (const mv::Config& cfg : configs) {
        mv::Multiverse tm(cfg);
        std::atomic<bool> stop{false};
        std::thread cycler([&] {
            while (!stop.load()) {
                tm.requestModeU();
                std::this_thread::sleep_for(std::chrono::microseconds(500));
            }
        });
        const mvtest::BankResult r = mvtest::runBank(tm, o);
        stop = true;
        cycler.join();
        CAPTURE(static_cast<int>(cfg.fixedMode));
        CHECK(r.violations == 0);
        CHECK(r.finalTotalOk);
        CHECK(r.snapshots > 0);
        if (cfg.fixedMode == mv::FixedMode::Adaptive) {
            MESSAGE("adaptive: versioned commits " << r.tm.versionedCommits << ", cycles " << r.tm.modeCycles);
            CHECK(r.tm.modeCycles > 0);
        }
        if (cfg.fixedMode == mv::FixedMode::UOnly) CHECK(r.tm.mode == mv::Mode::U);
    }
}

namespace {

struct ScanCancelled {};

struct ScanResult {
    uint64_t attempts{0};
    uint64_t commits{0};
    uint64_t aborts() const { return attempts - commits; }
};

// A reader that scans every cell while a dedicated updater keeps writing.
// `yieldEvery` > 0 makes the reader yield every that many reads and the
// updater yield after every commit, so that on a single core the two
// interleave as they would on separate cores.
template <class TM>
ScanResult scanAgainstUpdater(TM& tm, std::size_t n, std::chrono::milliseconds window, std::size_t yieldEvery) {
    std::vector<mv::TCell<int64_t>> cells(n);
    std::atomic<bool> stop{false};
    std::thread updater([&] {
        auto th = tm.registerThread();
        std::mt19937_64 rng(5);
        while (!stop.load(std::memory_order_relaxed)) {
            const std::size_t i = rng() % n;
            tm.run(th, [&](typename TM::Tx& tx) { tx.store(cells[i], tx.load(cells[i]) + 1); }, mv::TxHint::Update);
            if (yieldEvery != 0) std::this_thread::yield();
        }
    });
    ScanResult r;
    {
        auto th = tm.registerThread();
        const auto end = std::chrono::steady_clock::now() + window;
        try {
            while (std::chrono::steady_clock::now() < end) {
                tm.run(
                    th,
                    [&](typename TM::Tx& tx) {
                        ++r.attempts;
                        if (std::chrono::steady_clock::now() > end) throw ScanCancelled{};
                        int64_t s = 0;
                        for (std::size_t i = 0; i < n; ++i) {
                            s += tx.load(cells[i]);
                            if (yieldEvery != 0 && i % yieldEvery == yieldEvery - 1) std::this_thread::yield();
                        }
                        return s;
                    },
                    mv::TxHint::ReadOnly);
                ++r.commits;
            }
        } catch (const ScanCancelled&) {
            r.attempts -= 1;  // the cancelled attempt never ran
        }
    }
    stop = true;
    updater.join();
    for (auto& c : cells) tm.forgetUnsafe(&c, sizeof(c));
    return r;
}

}  // namespace

TEST_CASE("baseline reader starves without irrevocability") {
    mv::Config cfg = smallConfig();
    cfg.tableBits = 16;
    mv::Dctl tm(cfg, 0);
    const ScanResult r = scanAgainstUpdater(tm, 10000, std::chrono::milliseconds(1000), 1024);
    MESSAGE("baseline scan: " << r.aborts() << " aborts, " << r.commits << " commits in 1 s");
    CHECK(r.aborts() > 1000);
}

TEST_CASE("irrevocability lets the baseline reader commit") {
    mv::Config cfg = smallConfig();
    cfg.tableBits = 16;
    mv::Dctl tm(cfg, 20);
    const ScanResult r = scanAgainstUpdater(tm, 10000, std::chrono::milliseconds(1000), 1024);
    MESSAGE("irrevocable scan: " << r.aborts() << " aborts, " << r.commits << " commits");
    CHECK(r.commits > 0);
    CHECK(tm.stats().irrevocableCommits > 0);
}

TEST_CASE("the same scan commits under Multiverse") {
    mv::Config cfg = smallConfig();
    cfg.tableBits = 16;
    mv::Multiverse tm(cfg);
    const ScanResult r = scanAgainstUpdater(tm, 10000, std::chrono::milliseconds(1000), 1024);
    MESSAGE("multiverse scan: " << r.aborts() << " aborts, " << r.commits << " commits");
    CHECK(r.commits > 0);
    CHECK(tm.stats().tx.versionedCommits > 0);
}
