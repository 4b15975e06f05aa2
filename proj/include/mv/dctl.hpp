#pragma once

// Baseline unversioned STM in the DCTL style: encounter-time locking with an
// undo log, reads validated against versioned locks, and a global clock that
// only moves on aborts. A transaction that keeps aborting can take a single
// system-wide irrevocability token and lock everything it touches.

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
#include "mv/multiverse.hpp"
#include "mv/reclamation.hpp"
#include "mv/types.hpp"

namespace mv {

struct DctlStats {
    Timestamp clock;
    uint64_t commits;
    uint64_t aborts;
    uint64_t irrevocableCommits;
    uint64_t poisonHits;
};

class Dctl {
public:
    class Tx;
    class ThreadHandle;

    static constexpr uint32_t kDefaultIrrevocableAfter = 100;
    static constexpr const char* kName = "dctl";

    // `irrevocableAfter` aborted attempts make the next attempt irrevocable;
    // 0 disables irrevocability.
    explicit Dctl(Config cfg = Config::fromEnv(), uint32_t irrevocableAfter = kDefaultIrrevocableAfter);
    ~Dctl();
    Dctl(const Dctl&) = delete;
    Dctl& operator=(const Dctl&) = delete;

    ThreadHandle registerThread();

    template <class F>
    auto run(ThreadHandle& th, F&& body, TxHint hint = TxHint::Auto);

    void setRecorder(HistoryRecorder* r) { recorder_ = r; }

    // Frees objects that no transaction can reach any more.
    template <class T>
    void reclaimUnsafe(const std::vector<T*>& objs) {
        for (T* p : objs) delete p;
    }
    void forgetUnsafe(const void*, std::size_t) {}

    DctlStats stats() const;
    const Config& config() const { return cfg_; }
    LockTable& lockTable() { return locks_; }
    Ebr& ebr() { return ebr_; }
    uint32_t irrevocableAfter() const { return irrevocableAfter_; }

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
    void write(Tx& tx, Cell& c, Word v);
    // Irrevocable path: waits for the slot. Returns true if newly acquired.
    bool lockWaiting(Tx& tx, SlotIndex s, LockWord& prior);
    [[noreturn]] void abortTx(Tx& tx);

    Config cfg_;
    uint32_t irrevocableAfter_;
    GlobalClock clock_;
    LockTable locks_;
    Ebr ebr_;
    std::atomic<bool> token_{false};
    std::unique_ptr<std::atomic<bool>[]> registered_;
    std::vector<std::unique_ptr<Tx>> txs_;
    HistoryRecorder* recorder_{nullptr};
};

class Dctl::Tx {
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

    template <class T, class... A>
    T* alloc(A&&... args) {
        T* p = new T(std::forward<A>(args)...);
        allocs_.push_back(Retired::of(p));
        return p;
    }
    template <class T>
    void retire(T* p) {
        userFrees_.push_back(Retired::of(p));
    }

    ThreadId tid() const { return tid_; }
    bool active() const { return active_; }
    bool irrevocable() const { return irrevocable_; }
    bool readOnly() const { return readOnly_; }
    uint32_t attempts() const { return attempts_; }
    Timestamp rClock() const { return rClock_; }

private:
    friend class Dctl;
    struct Undo {
        Cell* cell;
        Word old;
    };
    struct ReadLock {
        SlotIndex slot;
        Timestamp prior;
        bool written;
    };

    Tx(Dctl* tm, ThreadId tid) : tm_(tm), tid_(tid) {}

    Dctl* tm_;
    ThreadId tid_;
    bool active_{false};
    TxHint hint_{TxHint::Auto};
    uint64_t txnId_{0};
    Timestamp rClock_{0};
    uint32_t attempts_{0};
    bool readOnly_{true};
    bool irrevocable_{false};
    Timestamp lastRelease_{0};

    std::vector<SlotIndex> readSet_;
    std::vector<Undo> undo_;
    std::vector<SlotIndex> lockedSlots_;
    std::vector<ReadLock> readLocks_;
    std::vector<Retired> userFrees_;
    std::vector<Retired> allocs_;

    std::atomic<uint64_t> commits_{0};
    std::atomic<uint64_t> aborts_{0};
    std::atomic<uint64_t> irrevocableCommits_{0};
};

class Dctl::ThreadHandle {
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
    friend class Dctl;
    ThreadHandle(Dctl* tm, ThreadId tid) : tm_(tm), tid_(tid) {}
    void release();

    Dctl* tm_{nullptr};
    ThreadId tid_{0};
};

template <class F>
auto Dctl::run(ThreadHandle& th, F&& body, TxHint hint) {
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
