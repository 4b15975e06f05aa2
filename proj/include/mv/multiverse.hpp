#pragma once

// Multiverse: an unversioned deferred-clock STM that versions individual
// words on demand so that long read-only transactions can run against a
// snapshot. Usage:
//
//   mv::Multiverse tm;
//   auto th = tm.registerThread();
//   int sum = tm.run(th, [&](mv::Multiverse::Tx& tx) { return tx.load(a) + tx.load(b); });

#include <atomic>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <type_traits>
#include <utility>
#include <vector>

#include "mv/config.hpp"
#include "mv/core_runtime.hpp"
#include "mv/history.hpp"
#include "mv/mode_controller.hpp"
#include "mv/reclamation.hpp"
#include "mv/types.hpp"
#include "mv/version_store.hpp"

namespace mv {

// Auto: read-only operations may go versioned after repeated aborts.
// ReadOnly: a write is a usage error. Update: never versioned.
enum class TxHint { Auto, ReadOnly, Update };

struct TxCounters {
    uint64_t commits{0};
    uint64_t aborts{0};
    uint64_t readOnlyCommits{0};
    uint64_t versionedCommits{0};
    uint64_t modeCasAttempts{0};
};

struct MultiverseStats {
    Mode mode;
    uint64_t modeCounter;
    Timestamp clock;
    Timestamp unversionThreshold;
    uint64_t minModeUReadCount;
    uint64_t liveVersionNodes;
    uint64_t versionedCells;
    uint64_t modeCycles;
    uint64_t bucketsUnversioned;
    uint64_t poisonHits;
    TxCounters tx;
};

class Multiverse {
public:
    class Tx;
    class ThreadHandle;

    explicit Multiverse(Config cfg = Config::fromEnv());
    ~Multiverse();
    Multiverse(const Multiverse&) = delete;
    Multiverse& operator=(const Multiverse&) = delete;

    static constexpr const char* kName = "multiverse";

    ThreadHandle registerThread();

    // Runs `body(tx)` as a transaction, retrying until it commits, and
    // returns its result. TxAbort unwinds to here; any other exception rolls
    // the attempt back and propagates.
    template <class F>
    auto run(ThreadHandle& th, F&& body, TxHint hint = TxHint::Auto);

    // Worker-side Q -> QtoU transition attempt; false outside Mode Q or in a
    // fixed-mode configuration.
    bool requestModeU();

    // Must be set before any transaction runs; null disables recording.
    void setRecorder(HistoryRecorder* r) { recorder_ = r; }

    // Frees objects that no transaction can reach any more and drops any
    // versions kept for their words. Call only while the objects are private.
    template <class T>
    void reclaimUnsafe(const std::vector<T*>& objs);
    // Drops versions kept for the words of [p, p + bytes) without freeing.
    void forgetUnsafe(const void* p, std::size_t bytes);

    MultiverseStats stats() const;
    const Config& config() const { return cfg_; }
    GlobalState& globalState() { return g_; }
    LockTable& lockTable() { return locks_; }
    VersionStore& versionStore() { return vs_; }
    Ebr& ebr() { return ebr_; }
    ModeController* modeController() { return controller_.get(); }

private:
    friend class Tx;

    void startOperation(Tx& tx, TxHint hint);
    void begin(Tx& tx);
    void commit(Tx& tx);
    void abortAttempt(Tx& tx);
    void cancel(Tx& tx);
    void rollback(Tx& tx);
    void finish(Tx& tx);

    Word read(Tx& tx, const Cell& c);
    Word unversionedRead(Tx& tx, const Cell& c, SlotIndex s);
    Word modeQVersionedRead(Tx& tx, const Cell& c, SlotIndex s);
    Word versionThenRead(Tx& tx, const Cell& c, SlotIndex s);
    Word modeUVersionedRead(Tx& tx, const Cell& c, SlotIndex s);
    Word traverseOrAbort(Tx& tx, const VersionList& l);
    void write(Tx& tx, Cell& c, Word v);
    void versionedWrite(Tx& tx, VersionList& l, Word v);
    [[noreturn]] void abortTx(Tx& tx);
    void checkPoison(Tx& tx, Word v);

    static void unversionHook(void* obj, std::size_t bytes, void* ctx, ThreadId by);
    void unversionObject(const void* obj, std::size_t bytes, ThreadId by);

    Config cfg_;
    GlobalState g_;
    LockTable locks_;
    Ebr ebr_;
    VersionStore vs_;
    std::vector<std::unique_ptr<Tx>> txs_;
    std::unique_ptr<ModeController> controller_;
    HistoryRecorder* recorder_{nullptr};
};

class Multiverse::Tx {
public:
    Word read(const Cell& c) { return tm_->read(*this, c); }
    void write(Cell& c, Word v) { tm_->write(*this, c, v); }

    template <WordCodable T>
    T load(const TCell<T>& c) {
        return decodeWord<T>(read(c));
    }
    template <WordCodable T>
    void store(TCell<T>& c, T v) {
        write(c, encodeWord(v));
    }

    // Allocation is undone if the attempt aborts.
    template <class T, class... A>
    T* alloc(A&&... args) {
        T* p = new T(std::forward<A>(args)...);
        allocs_.push_back(Retired::of(p, &Multiverse::unversionHook, tm_));
        return p;
    }
    // Frees `p` once no transaction can still reach it; revoked on abort.
    template <class T>
    void retire(T* p) {
        userFrees_.push_back(Retired::of(p, &Multiverse::unversionHook, tm_));
    }

    ThreadId tid() const { return tid_; }
    bool active() const { return active_; }
    Mode localMode() const { return localMode_; }
    uint64_t localModeCounter() const { return localCounter_; }
    bool versioned() const { return versioned_; }
    bool readOnly() const { return readOnly_; }
    uint32_t attempts() const { return attempts_; }
    uint64_t readCount() const { return readCnt_; }
    Timestamp rClock() const { return rClock_; }
    bool sticky() const { return tracker_.sticky(); }
    const SmallTxnTracker& tracker() const { return tracker_; }
    TxCounters counters() const;

private:
    friend class Multiverse;
    struct Undo {
        Cell* cell;
        Word old;
    };

    Tx(Multiverse* tm, ThreadId tid, uint32_t s) : tm_(tm), tid_(tid), tracker_(s) {}

    Multiverse* tm_;
    ThreadId tid_;
    bool active_{false};
    TxHint hint_{TxHint::Auto};
    uint64_t txnId_{0};

    Timestamp rClock_{0};
    uint64_t localCounter_{0};
    Mode localMode_{Mode::Q};
    uint32_t attempts_{0};
    bool readOnly_{true};
    uint64_t readCnt_{0};
    bool versioned_{false};
    bool pinnedUnversioned_{false};
    bool wroteWhileVersioned_{false};
    Timestamp initialVersionedTs_{kInvalidTs};
    Timestamp lastRelease_{0};
    SmallTxnTracker tracker_;

    std::vector<SlotIndex> readSet_;
    std::vector<Undo> undo_;
    std::vector<SlotIndex> lockedSlots_;
    std::vector<VersionList*> versionedWrites_;
    std::vector<VersionNode*> nodeFrees_;
    std::vector<Retired> userFrees_;
    std::vector<Retired> allocs_;

    std::atomic<uint64_t> commits_{0};
    std::atomic<uint64_t> aborts_{0};
    std::atomic<uint64_t> roCommits_{0};
    std::atomic<uint64_t> versionedCommits_{0};
    std::atomic<uint64_t> casAttempts_{0};
};

class Multiverse::ThreadHandle {
public:
    ThreadHandle() = default;
    ThreadHandle(ThreadHandle&& o) noexcept : tm_(std::exchange(o.tm_, nullptr)), tid_(o.tid_) {}
    ThreadHandle& operator=(ThreadHandle&& o) noexcept {
        if (this != &o) {
            release();
            tm_ = std::exchange(o.tm_, nullptr);
            tid_ = o.tid_;
        }
        return *this;
    }
    ~ThreadHandle() { release(); }

    ThreadId tid() const { return tid_; }
    Tx& tx() { return *tm_->txs_[tid_]; }
    explicit operator bool() const { return tm_ != nullptr; }

private:
    friend class Multiverse;
    ThreadHandle(Multiverse* tm, ThreadId tid) : tm_(tm), tid_(tid) {}
    void release();

    Multiverse* tm_{nullptr};
    ThreadId tid_{0};
};

template <class T>
void Multiverse::reclaimUnsafe(const std::vector<T*>& objs) {
    ThreadHandle th = registerThread();
    for (T* p : objs) {
        unversionObject(p, sizeof(T), th.tid());
        delete p;
    }
}

template <class F>
auto Multiverse::run(ThreadHandle& th, F&& body, TxHint hint) {
    using R = std::invoke_result_t<F&, Tx&>;
    Tx& tx = th.tx();
    startOperation(tx, hint);
    for (;;) {
        begin(tx);
        try {
            if constexpr (std::is_void_v<R>) {
                body(tx);
                commit(tx);
                return;
            } else {
                R result = body(tx);
                commit(tx);
                return result;
            }
        } catch (const TxAbort&) {
            abortAttempt(tx);
        } catch (...) {
            cancel(tx);
            throw;
        }
    }
}

}  // namespace mv
