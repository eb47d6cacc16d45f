use std::collections::VecDeque;

/// Outcome of offering a packet to a link queue.
#[derive(Debug, PartialEq, Eq)]
pub enum Enqueue<P> {
    Accepted,
    Dropped(P),
}

/// Tail-drop FIFO in front of one direction of a link. The packet on the
/// wire is not counted against the capacity.
#[derive(Clone, Debug)]
pub struct LinkQueue<P> {
    capacity: usize,
    waiting: VecDeque<P>,
    busy: bool,
}

impl<P> LinkQueue<P> {
    pub fn new(capacity: usize) -> LinkQueue<P> {
        LinkQueue {
            capacity,
            waiting: VecDeque::new(),
            busy: false,
        }
    }

    pub fn occupancy(&self) -> usize {
        self.waiting.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_busy(&self) -> bool {
        self.busy
    }

    pub fn set_busy(&mut self, busy: bool) {
        self.busy = busy;
    }

    pub fn pop(&mut self) -> Option<P> {
        self.waiting.pop_front()
    }
}

pub fn enqueue<P>(queue: &mut LinkQueue<P>, packet: P) -> Enqueue<P> {
    if queue.waiting.len() >= queue.capacity {
        Enqueue::Dropped(packet)
    } else {
        queue.waiting.push_back(packet);
        Enqueue::Accepted
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_drop_at_capacity() {
        let mut q = LinkQueue::new(400);
        for i in 0..399 {
            assert_eq!(enqueue(&mut q, i), Enqueue::Accepted);
        }
        assert_eq!(q.occupancy(), 399);
        assert_eq!(enqueue(&mut q, 399), Enqueue::Accepted);
        assert_eq!(enqueue(&mut q, 400), Enqueue::Dropped(400));
        assert_eq!(q.occupancy(), 400);
    }

    #[test]
    fn drains_in_arrival_order() {
        let mut q = LinkQueue::new(3);
        for i in [7, 3, 9] {
            enqueue(&mut q, i);
        }
        assert_eq!([q.pop(), q.pop(), q.pop(), q.pop()], [Some(7), Some(3), Some(9), None]);
    }
}
