#include "mv/dctl.hpp"

#include <algorithm>
#include <cassert>
#include <thread>

namespace mv {

Dctl::Dctl(Config cfg, uint32_t irrevocableAfter)
    : cfg_(cfg),
      irrevocableAfter_(irrevocableAfter),
      locks_((cfg.validate(), cfg.tableBits)),
      ebr_(cfg.maxThreads, cfg.ebrPoison, cfg.faultDisableEbr),
      registered_(std::make_unique<std::atomic<bool>[]>(cfg.maxThreads)) {
    txs_.reserve(cfg_.maxThreads);
    for (ThreadId t = 0; t < cfg_.maxThreads; ++t) txs_.emplace_back(new Tx(this, t));
}

Dctl::~Dctl() { ebr_.drainAll(0); }

Dctl::ThreadHandle Dctl::registerThread() {
    for (ThreadId t = 0; t < cfg_.maxThreads; ++t) {
        bool expect = false;
        if (registered_[t].compare_exchange_strong(expect, true)) {
            txs_[t]->lastRelease_ = 0;
            return ThreadHandle(this, t);
        }
    }
    throw std::runtime_error("too many registered threads");
}

void Dctl::ThreadHandle::release() {
    if (tm_ == nullptr) return;
    assert(!tx().active() && "deregistering inside a transaction");
    tm_->ebr_.detach(tid_);
    tm_->registered_[tid_].store(false, std::memory_order_release);
    tm_ = nullptr;
}

void Dctl::startOperation(Tx& tx, TxHint hint) {
    if (tx.active_) throw std::logic_error("nested transactions are not supported");
    tx.hint_ = hint;
    tx.attempts_ = 0;
    tx.txnId_ = recorder_ != nullptr ? recorder_->newTxnId() : 0;
}

void Dctl::begin(Tx& tx) {
    tx.active_ = true;
    ebr_.enter(tx.tid_);
    if (irrevocableAfter_ != 0 && tx.attempts_ >= irrevocableAfter_ && !tx.irrevocable_) {
        Backoff bo;
        bool expect = false;
        while (!token_.compare_exchange_weak(expect, true, std::memory_order_acq_rel)) {
            expect = false;
            bo.pause();
        }
        tx.irrevocable_ = true;
    }
    if (recorder_ != nullptr) recorder_->begin(tx.tid_, tx.txnId_, tx.attempts_);
    Timestamp r = clock_.read();
    if (r == tx.lastRelease_) {
        clock_.advancePast(r);
        r = clock_.read();
    }
    tx.rClock_ = r;
    tx.readOnly_ = true;
    tx.readSet_.clear();
    tx.undo_.clear();
    tx.lockedSlots_.clear();
    tx.readLocks_.clear();
    tx.userFrees_.clear();
    tx.allocs_.clear();
}

void Dctl::abortTx(Tx&) { throw TxAbort{}; }

bool Dctl::lockWaiting(Tx& tx, SlotIndex s, LockWord& prior) {
    Backoff bo;
    for (;;) {
        const LockWord w = locks_.load(s);
        if (w.locked() && w.tid() == tx.tid_) return false;
        if (!w.locked() && locks_.tryLock(s, w, tx.tid_)) {
            prior = w;
            return true;
        }
        bo.pause();
    }
}

Word Dctl::read(Tx& tx, const Cell& c) {
    assert(tx.active_);
    const SlotIndex s = locks_.slotFor(&c);
    Word data;
    if (tx.irrevocable_) {
        LockWord prior;
        if (lockWaiting(tx, s, prior)) tx.readLocks_.push_back({s, prior.version(), false});
        data = c.word.load(std::memory_order_acquire);
    } else {
        data = c.word.load(std::memory_order_acquire);
        if (ebr_.poisoning() && data == kPoisonWord) {
            ebr_.notePoisonHit();
            abortTx(tx);
        }
        if (!validateLock(locks_.load(s), tx.rClock_, tx.tid_)) abortTx(tx);
        tx.readSet_.push_back(s);
    }
    if (recorder_ != nullptr) recorder_->read(tx.tid_, &c, data);
    return data;
}

void Dctl::write(Tx& tx, Cell& c, Word v) {
    assert(tx.active_);
    if (tx.hint_ == TxHint::ReadOnly) throw std::logic_error("write inside a read-only transaction");
    tx.readOnly_ = false;
    const SlotIndex s = locks_.slotFor(&c);
    if (tx.irrevocable_) {
        LockWord prior;
        if (lockWaiting(tx, s, prior)) {
            tx.lockedSlots_.push_back(s);
        } else {
            auto it = std::find_if(tx.readLocks_.begin(), tx.readLocks_.end(),
                                   [s](const Tx::ReadLock& r) { return r.slot == s; });
            if (it != tx.readLocks_.end()) it->written = true;
        }
    } else {
        const LockWord w = locks_.load(s);
        if (!validateLock(w, tx.rClock_, tx.tid_)) abortTx(tx);
        if (!w.locked()) {
            if (!locks_.tryLock(s, w, tx.tid_)) abortTx(tx);
            tx.lockedSlots_.push_back(s);
        }
    }
    tx.undo_.push_back({&c, c.word.load(std::memory_order_relaxed)});
    c.word.store(v, std::memory_order_release);
    if (recorder_ != nullptr) recorder_->write(tx.tid_, &c, v);
}

void Dctl::commit(Tx& tx) {
    const ThreadId tid = tx.tid_;
    if (!tx.readOnly_ || !tx.readLocks_.empty()) {
        if (!tx.irrevocable_ && !cfg_.faultSkipReadSetValidation) {
            for (SlotIndex s : tx.readSet_) {
                if (!validateLock(locks_.load(s), tx.rClock_, tid)) abortTx(tx);
            }
        }
        const Timestamp c = clock_.read();
        for (SlotIndex s : tx.lockedSlots_) locks_.unlock(s, c);
        for (const Tx::ReadLock& r : tx.readLocks_) locks_.unlock(r.slot, r.written ? c : r.prior);
        for (const Retired& r : tx.userFrees_) ebr_.retire(tid, r);
        if (!tx.readOnly_) tx.lastRelease_ = c;
    }
    tx.allocs_.clear();
    if (tx.irrevocable_) {
        tx.irrevocable_ = false;
        token_.store(false, std::memory_order_release);
        tx.irrevocableCommits_.fetch_add(1, std::memory_order_relaxed);
    }
    tx.commits_.fetch_add(1, std::memory_order_relaxed);
    if (recorder_ != nullptr) recorder_->commit(tid);
    finish(tx);
}

void Dctl::rollback(Tx& tx) {
    for (auto it = tx.undo_.rbegin(); it != tx.undo_.rend(); ++it) {
        it->cell->word.store(it->old, std::memory_order_release);
    }
    tx.userFrees_.clear();
    for (const Retired& r : tx.allocs_) ebr_.retire(tx.tid_, r);
    tx.allocs_.clear();
    const Timestamp next = clock_.increment();
    if (!tx.lockedSlots_.empty()) tx.lastRelease_ = next;
    for (SlotIndex s : tx.lockedSlots_) locks_.unlock(s, next);
    for (const Tx::ReadLock& r : tx.readLocks_) locks_.unlock(r.slot, r.written ? next : r.prior);
    tx.lockedSlots_.clear();
    tx.readLocks_.clear();
    tx.undo_.clear();
    if (tx.irrevocable_) {
        tx.irrevocable_ = false;
        token_.store(false, std::memory_order_release);
    }
}

void Dctl::finish(Tx& tx) {
    ebr_.exit(tx.tid_);
    tx.active_ = false;
}

void Dctl::abortAttempt(Tx& tx) {
    assert(!tx.irrevocable_ && "irrevocable transactions never abort");
    rollback(tx);
    tx.aborts_.fetch_add(1, std::memory_order_relaxed);
    if (recorder_ != nullptr) recorder_->abort(tx.tid_);
    finish(tx);
    ++tx.attempts_;
    if (tx.attempts_ > 1) std::this_thread::yield();
}

void Dctl::cancel(Tx& tx) {
    rollback(tx);
    if (recorder_ != nullptr) recorder_->abort(tx.tid_);
    finish(tx);
}

DctlStats Dctl::stats() const {
    DctlStats st{};
    st.clock = clock_.read();
    st.poisonHits = ebr_.poisonHits();
    for (const auto& tx : txs_) {
        st.commits += tx->commits_.load(std::memory_order_relaxed);
        st.aborts += tx->aborts_.load(std::memory_order_relaxed);
        st.irrevocableCommits += tx->irrevocableCommits_.load(std::memory_order_relaxed);
    }
    return st;
}

}  // namespace mv
