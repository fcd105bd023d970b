//! Multi-pattern byte search (Aho-Corasick).
//!
//! A trie over all patterns with failure links computed breadth-first, then
//! flattened into a dense transition table so a scan is one lookup per byte.
//! Each state's output list already includes the outputs reachable through
//! its failure chain, so a scan reports every (possibly overlapping)
//! occurrence of every pattern in one pass.

const ROOT: u32 = 0;
/// Set on a transition whose target state has outputs.
const HAS_OUT: u32 = 1 << 31;

#[derive(Debug, Clone, Default)]
struct Node {
    edges: Vec<(u8, u32)>,
    fail: u32,
    out: Vec<u32>,
}

impl Node {
    fn next(&self, b: u8) -> Option<u32> {
        self.edges.binary_search_by_key(&b, |&(k, _)| k).ok().map(|i| self.edges[i].1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Match {
    pub pattern: u32,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone)]
pub struct AhoCorasick {
    /// `delta[state * 256 + byte]`, tagged with [`HAS_OUT`].
    delta: Vec<u32>,
    /// Outputs of state `s` are `out_ids[out_start[s]..out_start[s + 1]]`.
    out_start: Vec<u32>,
    out_ids: Vec<u32>,
    lens: Vec<usize>,
}

impl AhoCorasick {
    /// Builds the automaton. Pattern ids are positions in `patterns`; empty
    /// patterns get an id but never match.
    pub fn new<I, P>(patterns: I) -> Self
    where
        I: IntoIterator<Item = P>,
        P: AsRef<[u8]>,
    {
        let mut nodes = vec![Node::default()];
        let mut lens = Vec::new();
        for (id, p) in patterns.into_iter().enumerate() {
            let p = p.as_ref();
            lens.push(p.len());
            if p.is_empty() {
                continue;
            }
            let mut cur = ROOT;
            for &b in p {
                cur = match nodes[cur as usize].next(b) {
                    Some(s) => s,
                    None => {
                        let s = nodes.len() as u32;
                        nodes.push(Node::default());
                        let edges = &mut nodes[cur as usize].edges;
                        let at = edges.partition_point(|&(k, _)| k < b);
                        edges.insert(at, (b, s));
                        s
                    }
                };
            }
            nodes[cur as usize].out.push(id as u32);
        }

        // Breadth-first: a state's failure target is shallower, so its row
        // is complete by the time the state is visited.
        let mut delta = vec![ROOT; nodes.len() * 256];
        for &(b, s) in &nodes[ROOT as usize].edges {
            delta[b as usize] = s;
        }
        let mut queue: std::collections::VecDeque<u32> = nodes[ROOT as usize].edges.iter().map(|&(_, s)| s).collect();
        while let Some(s) = queue.pop_front() {
            let fail = nodes[s as usize].fail as usize;
            let (row, frow) = (s as usize * 256, fail * 256);
            for b in 0..256 {
                delta[row + b] = delta[frow + b];
            }
            let edges = nodes[s as usize].edges.clone();
            for (b, child) in edges {
                let f = delta[frow + b as usize];
                nodes[child as usize].fail = f;
                let inherited = nodes[f as usize].out.clone();
                nodes[child as usize].out.extend(inherited);
                delta[row + b as usize] = child;
                queue.push_back(child);
            }
        }

        let mut out_start = Vec::with_capacity(nodes.len() + 1);
        let mut out_ids = Vec::new();
        for n in &nodes {
            out_start.push(out_ids.len() as u32);
            out_ids.extend_from_slice(&n.out);
        }
        out_start.push(out_ids.len() as u32);
        for t in &mut delta {
            if !nodes[*t as usize].out.is_empty() {
                *t |= HAS_OUT;
            }
        }
        AhoCorasick { delta, out_start, out_ids, lens }
    }

    pub fn pattern_count(&self) -> usize {
        self.lens.len()
    }

    pub fn state_count(&self) -> usize {
        self.out_start.len() - 1
    }

    fn outputs(&self, s: u32) -> &[u32] {
        let s = s as usize;
        &self.out_ids[self.out_start[s] as usize..self.out_start[s + 1] as usize]
    }

    /// Calls `f(pattern_id, end)` for every occurrence, in order of `end`.
    pub fn for_each_match(&self, haystack: &[u8], mut f: impl FnMut(u32, usize)) {
        let delta = self.delta.as_slice();
        let mut s = ROOT;
        for (i, &b) in haystack.iter().enumerate() {
            let t = delta[(s as usize) << 8 | b as usize];
            s = t & !HAS_OUT;
            if t & HAS_OUT != 0 {
                for &p in self.outputs(s) {
                    f(p, i + 1);
                }
            }
        }
    }

    pub fn find_overlapping(&self, haystack: &[u8]) -> Vec<Match> {
        let mut out = Vec::new();
        self.for_each_match(haystack, |p, end| {
            out.push(Match { pattern: p, start: end - self.lens[p as usize], end });
        });
        out
    }

    pub fn is_match(&self, haystack: &[u8]) -> bool {
        let mut s = ROOT;
        for &b in haystack {
            let t = self.delta[(s as usize) << 8 | b as usize];
            if t & HAS_OUT != 0 {
                return true;
            }
            s = t;
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive(patterns: &[Vec<u8>], hay: &[u8]) -> Vec<Match> {
        let mut out = Vec::new();
        for end in 1..=hay.len() {
            for (id, p) in patterns.iter().enumerate() {
                if !p.is_empty() && p.len() <= end && &hay[end - p.len()..end] == p.as_slice() {
                    out.push(Match { pattern: id as u32, start: end - p.len(), end });
                }
            }
        }
        out
    }

    fn sorted(mut v: Vec<Match>) -> Vec<Match> {
        v.sort_by_key(|m| (m.end, m.pattern));
        v
    }

    #[test]
    fn classic_example() {
        let pats: Vec<Vec<u8>> = ["he", "she", "his", "hers"].iter().map(|s| s.as_bytes().to_vec()).collect();
        let ac = AhoCorasick::new(&pats);
        let got = sorted(ac.find_overlapping(b"ushers"));
        assert_eq!(
            got,
            vec![
                Match { pattern: 0, start: 2, end: 4 },
                Match { pattern: 1, start: 1, end: 4 },
                Match { pattern: 3, start: 2, end: 6 },
            ]
        );
        assert!(ac.is_match(b"this"));
        assert!(!ac.is_match(b"xyz"));
    }

    #[test]
    fn duplicates_and_empty() {
        let ac = AhoCorasick::new(["abc", "", "abc"]);
        assert_eq!(ac.pattern_count(), 3);
        let ids: Vec<u32> = ac.find_overlapping(b"xabcx").iter().map(|m| m.pattern).collect();
        assert_eq!(ids, vec![0, 2]);
        assert!(AhoCorasick::new(Vec::<&[u8]>::new()).find_overlapping(b"abc").is_empty());
    }

    proptest! {
        #[test]
        fn agrees_with_naive_search(
            patterns in proptest::collection::vec(proptest::collection::vec(0u8..4, 0..6), 0..12),
            hay in proptest::collection::vec(0u8..4, 0..64),
        ) {
            let ac = AhoCorasick::new(&patterns);
            prop_assert_eq!(sorted(ac.find_overlapping(&hay)), sorted(naive(&patterns, &hay)));
        }
    }
}
