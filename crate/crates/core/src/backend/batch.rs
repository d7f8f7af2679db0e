use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

/// Applies `call` to every item on at most `max_concurrency` worker threads.
/// Workers pull the next index from a shared counter, so no more than
/// `max_concurrency` calls are ever in flight. No fairness is promised
/// between items; the output is always in input order.
pub fn run_batch<T, R, F>(max_concurrency: usize, items: &[T], call: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = max_concurrency.max(1).min(items.len());
    if workers <= 1 {
        return items.iter().map(&call).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let result = call(&items[i]);
                slots.lock().expect("batch slot lock")[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .expect("batch slot lock")
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}
