//! Bounded lockless FIFO rings.
//!
//! The rings are the only runtime channel between the untrusted acquisition
//! side and the analysis workers. They carry packet descriptors (small
//! references into the shared packet pool), never packet bytes.
//!
//! The implementation is the classic bounded queue with one sequence number
//! per cell: a producer claims a ticket on `tail` with a CAS and publishes the
//! value by bumping the cell's sequence; a consumer does the mirror image on
//! `head`. Capacity is a power of two so cursor-to-cell mapping is a mask.
//! Operations never block: `enqueue` reports `Full`, `dequeue` reports empty.

use std::cell::UnsafeCell;
use std::fmt;
use std::mem::MaybeUninit;
use std::sync::atomic::{AtomicUsize, Ordering};

use thiserror::Error;

/// Default number of entries per ring used by the harness.
pub const DEFAULT_RING_CAPACITY: usize = 4096;

/// Producer/consumer discipline a ring was created for.
///
/// Both disciplines share the same algorithm, which is safe for any number of
/// producers and consumers; the discipline documents (and lets callers assert)
/// how a ring is meant to be used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Discipline {
    /// Many producers, exactly one consumer (per-worker RX rings).
    Mpsc,
    /// Many producers, many consumers (the shared TX ring).
    Mpmc,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RingError {
    #[error("ring capacity must be a non-zero power of two, got {0}")]
    Capacity(usize),
}

/// Returned by [`Ring::enqueue`] when the ring is full; hands the element back.
#[derive(PartialEq, Eq)]
pub struct Full<T>(pub T);

impl<T> fmt::Debug for Full<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Full(..)")
    }
}

impl<T> fmt::Display for Full<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ring is full")
    }
}

#[repr(align(64))]
struct CachePadded<T>(T);

struct Cell<T> {
    sequence: AtomicUsize,
    value: UnsafeCell<MaybeUninit<T>>,
}

pub struct Ring<T> {
    cells: Box<[Cell<T>]>,
    mask: usize,
    discipline: Discipline,
    head: CachePadded<AtomicUsize>,
    tail: CachePadded<AtomicUsize>,
}

// Cells are handed between threads only through the sequence protocol; a cell
// value is accessed by exactly one thread between claiming and publishing it.
unsafe impl<T: Send> Send for Ring<T> {}
unsafe impl<T: Send> Sync for Ring<T> {}

impl<T> Ring<T> {
    pub fn new(capacity: usize, discipline: Discipline) -> Result<Self, RingError> {
        if capacity == 0 || !capacity.is_power_of_two() {
            return Err(RingError::Capacity(capacity));
        }
        let cells = (0..capacity)
            .map(|i| Cell { sequence: AtomicUsize::new(i), value: UnsafeCell::new(MaybeUninit::uninit()) })
            .collect::<Vec<_>>()
            .into_boxed_slice();
        Ok(Ring {
            cells,
            mask: capacity - 1,
            discipline,
            head: CachePadded(AtomicUsize::new(0)),
            tail: CachePadded(AtomicUsize::new(0)),
        })
    }

    pub fn capacity(&self) -> usize {
        self.mask + 1
    }

    pub fn discipline(&self) -> Discipline {
        self.discipline
    }

    /// Number of elements currently held. Exact at quiescence, a snapshot
    /// otherwise.
    pub fn len(&self) -> usize {
        let tail = self.tail.0.load(Ordering::Acquire);
        let head = self.head.0.load(Ordering::Acquire);
        tail.wrapping_sub(head).min(self.capacity())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn enqueue(&self, value: T) -> Result<(), Full<T>> {
        let mut pos = self.tail.0.load(Ordering::Relaxed);
        loop {
            let cell = &self.cells[pos & self.mask];
            let seq = cell.sequence.load(Ordering::Acquire);
            let diff = seq as isize - pos as isize;
            if diff == 0 {
                match self.tail.0.compare_exchange_weak(pos, pos.wrapping_add(1), Ordering::Relaxed, Ordering::Relaxed)
                {
                    Ok(_) => {
                        unsafe { (*cell.value.get()).write(value) };
                        cell.sequence.store(pos.wrapping_add(1), Ordering::Release);
                        return Ok(());
                    }
                    Err(actual) => pos = actual,
                }
            } else if diff < 0 {
                return Err(Full(value));
            } else {
                pos = self.tail.0.load(Ordering::Relaxed);
            }
        }
    }

    pub fn dequeue(&self) -> Option<T> {
        let mut pos = self.head.0.load(Ordering::Relaxed);
        loop {
            let cell = &self.cells[pos & self.mask];
            let seq = cell.sequence.load(Ordering::Acquire);
            let diff = seq as isize - pos.wrapping_add(1) as isize;
            if diff == 0 {
                match self.head.0.compare_exchange_weak(pos, pos.wrapping_add(1), Ordering::Relaxed, Ordering::Relaxed)
                {
                    Ok(_) => {
                        let value = unsafe { (*cell.value.get()).assume_init_read() };
                        cell.sequence.store(pos.wrapping_add(self.mask + 1), Ordering::Release);
                        return Some(value);
                    }
                    Err(actual) => pos = actual,
                }
            } else if diff < 0 {
                return None;
            } else {
                pos = self.head.0.load(Ordering::Relaxed);
            }
        }
    }

    /// Moves as many elements as fit from the front of `items` into the ring.
    /// Elements that did not fit stay in `items`, in order.
    pub fn enqueue_burst(&self, items: &mut Vec<T>) -> usize {
        let mut moved = 0;
        let mut rest = Vec::new();
        for item in items.drain(..) {
            if !rest.is_empty() {
                rest.push(item);
                continue;
            }
            match self.enqueue(item) {
                Ok(()) => moved += 1,
                Err(Full(item)) => rest.push(item),
            }
        }
        *items = rest;
        moved
    }

    /// Appends up to `max` available elements to `out`, oldest first.
    pub fn dequeue_burst(&self, out: &mut Vec<T>, max: usize) -> usize {
        let mut n = 0;
        while n < max {
            match self.dequeue() {
                Some(v) => {
                    out.push(v);
                    n += 1;
                }
                None => break,
            }
        }
        n
    }
}

impl<T> Drop for Ring<T> {
    fn drop(&mut self) {
        while self.dequeue().is_some() {}
    }
}

impl<T> fmt::Debug for Ring<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Ring")
            .field("capacity", &self.capacity())
            .field("len", &self.len())
            .field("discipline", &self.discipline)
            .finish()
    }
}
