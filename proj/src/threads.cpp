#include "srrn/threads.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>
#include <vector>

namespace srrn {

namespace {

std::atomic<int> g_threads{1};

// Persistent helper threads: spawning OS threads per parallel_for call costs
// far more than the work items themselves at this problem size. The caller
// always executes partition 0; helpers pick up the remaining static chunks,
// so the partitioning (and therefore every float result) is identical to a
// serial run regardless of the worker count.
class WorkerPool {
public:
    ~WorkerPool() {
        {
            std::lock_guard<std::mutex> lk(m_);
            stop_ = true;
        }
        work_cv_.notify_all();
        for (auto& t : helpers_) t.join();
    }

    void run(int begin, int end, const std::function<void(int)>& fn, int parts) {
        ensure_helpers(parts - 1);
        const int count = end - begin;
        const int chunk = (count + parts - 1) / parts;
        {
            std::lock_guard<std::mutex> lk(m_);
            job_begin_ = begin;
            job_end_ = end;
            job_chunk_ = chunk;
            job_fn_ = &fn;
            remaining_ = static_cast<int>(helpers_.size());
            ++generation_;
        }
        work_cv_.notify_all();
        for (int i = begin; i < std::min(end, begin + chunk); ++i) fn(i);
        std::unique_lock<std::mutex> lk(m_);
        done_cv_.wait(lk, [this] { return remaining_ == 0; });
    }

private:
    void ensure_helpers(int n) {
        if (static_cast<int>(helpers_.size()) >= n) return;
        std::lock_guard<std::mutex> lk(m_);
        while (static_cast<int>(helpers_.size()) < n) {
            const int idx = static_cast<int>(helpers_.size());
            const std::uint64_t gen = generation_;
            helpers_.emplace_back([this, idx, gen] { helper_main(idx, gen); });
        }
    }

    void helper_main(int idx, std::uint64_t seen) {
        std::unique_lock<std::mutex> lk(m_);
        for (;;) {
            work_cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
            if (stop_) return;
            seen = generation_;
            const int lo = job_begin_ + (idx + 1) * job_chunk_;
            const int hi = std::min(job_end_, lo + job_chunk_);
            const std::function<void(int)>* fn = job_fn_;
            lk.unlock();
            for (int i = lo; i < hi; ++i) (*fn)(i);
            lk.lock();
            if (--remaining_ == 0) done_cv_.notify_one();
        }
    }

    std::mutex m_;
    std::condition_variable work_cv_, done_cv_;
    std::vector<std::thread> helpers_;
    const std::function<void(int)>* job_fn_ = nullptr;
    int job_begin_ = 0, job_end_ = 0, job_chunk_ = 0;
    int remaining_ = 0;
    std::uint64_t generation_ = 0;
    bool stop_ = false;
};

WorkerPool& pool() {
    static WorkerPool p;
    return p;
}

}  // namespace

void set_thread_count(int n) { g_threads = std::max(1, n); }
int thread_count() { return g_threads.load(); }

void parallel_for(int begin, int end, const std::function<void(int)>& fn) {
    const int count = end - begin;
    if (count <= 0) return;
    const int parts = std::min(thread_count(), count);
    if (parts == 1) {
        for (int i = begin; i < end; ++i) fn(i);
        return;
    }
    pool().run(begin, end, fn, parts);
}

}  // namespace srrn
