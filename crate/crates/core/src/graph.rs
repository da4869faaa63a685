//! Directed graphs over named nodes: reachability, cycle detection and
//! d-separation (reachable-set form of Bayes-ball).

use std::collections::{BTreeSet, VecDeque};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    names: Vec<String>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl Dag {
    /// Build from node names and named edges. The result may contain cycles;
    /// use [`Dag::cycle_nodes`] to find them.
    pub fn from_edges<S: AsRef<str>>(names: &[S], edges: &[(S, S)]) -> Result<Self> {
        let names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
        let n = names.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for (a, b) in edges {
            let from = index_in(&names, a.as_ref())?;
            let to = index_in(&names, b.as_ref())?;
            if !children[from].contains(&to) {
                children[from].push(to);
                parents[to].push(from);
            }
        }
        for p in parents.iter_mut() {
            p.sort_unstable();
        }
        for c in children.iter_mut() {
            c.sort_unstable();
        }
        Ok(Self {
            names,
            parents,
            children,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index(&self, name: &str) -> Result<usize> {
        index_in(&self.names, name)
    }

    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (from, cs) in self.children.iter().enumerate() {
            for &to in cs {
                out.push((from, to));
            }
        }
        out
    }

    /// Nodes reachable from `start` along directed edges, excluding `start`
    /// itself unless it lies on a cycle.
    pub fn descendants(&self, start: usize) -> BTreeSet<usize> {
        self.walk(start, |i| &self.children[i])
    }

    pub fn ancestors(&self, start: usize) -> BTreeSet<usize> {
        self.walk(start, |i| &self.parents[i])
    }

    pub fn has_path(&self, from: usize, to: usize) -> bool {
        self.descendants(from).contains(&to)
    }

    fn walk<'a, F>(&'a self, start: usize, next: F) -> BTreeSet<usize>
    where
        F: Fn(usize) -> &'a [usize],
    {
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<usize> = next(start).iter().copied().collect();
        while let Some(v) = queue.pop_front() {
            if seen.insert(v) {
                queue.extend(next(v).iter().copied());
            }
        }
        seen
    }

    /// Nodes that lie on at least one directed cycle.
    pub fn cycle_nodes(&self) -> BTreeSet<usize> {
        (0..self.len())
            .filter(|&i| self.descendants(i).contains(&i))
            .collect()
    }

    pub fn is_acyclic(&self) -> bool {
        self.cycle_nodes().is_empty()
    }

    /// Whether every edge points forward in the stored node order.
    pub fn respects_order(&self) -> Vec<(usize, usize)> {
        self.edges().into_iter().filter(|(a, b)| a >= b).collect()
    }

    /// Nodes d-connected to some member of `sources` given `given`.
    pub fn reachable(&self, sources: &[usize], given: &[usize]) -> BTreeSet<usize> {
        let given: BTreeSet<usize> = given.iter().copied().collect();
        // Ancestors of the conditioning set (inclusive) open colliders.
        let mut anc: BTreeSet<usize> = given.clone();
        for &z in &given {
            anc.extend(self.ancestors(z));
        }
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
        enum Dir {
            Up,
            Down,
        }
        let mut visited = BTreeSet::new();
        let mut reached = BTreeSet::new();
        let mut queue: VecDeque<(usize, Dir)> = sources.iter().map(|&s| (s, Dir::Up)).collect();
        while let Some((v, dir)) = queue.pop_front() {
            if !visited.insert((v, dir)) {
                continue;
            }
            let observed = given.contains(&v);
            if !observed {
                reached.insert(v);
            }
            match dir {
                Dir::Up if !observed => {
                    queue.extend(self.parents[v].iter().map(|&p| (p, Dir::Up)));
                    queue.extend(self.children[v].iter().map(|&c| (c, Dir::Down)));
                }
                Dir::Up => {}
                Dir::Down => {
                    if !observed {
                        queue.extend(self.children[v].iter().map(|&c| (c, Dir::Down)));
                    }
                    if anc.contains(&v) {
                        queue.extend(self.parents[v].iter().map(|&p| (p, Dir::Up)));
                    }
                }
            }
        }
        for s in sources {
            reached.remove(s);
        }
        reached
    }

    pub fn d_separated(&self, xs: &[usize], ys: &[usize], given: &[usize]) -> bool {
        let reach = self.reachable(xs, given);
        ys.iter().all(|y| !reach.contains(y))
    }

    /// Copy of the graph with every edge leaving `node` removed.
    pub fn without_outgoing(&self, node: usize) -> Dag {
        let mut g = self.clone();
        for &c in &self.children[node] {
            g.parents[c].retain(|&p| p != node);
        }
        g.children[node].clear();
        g
    }
}

fn index_in(names: &[String], name: &str) -> Result<usize> {
    names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| Error::UnknownVariable(name.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dag(names: &[&str], edges: &[(&str, &str)]) -> Dag {
        Dag::from_edges(names, edges).unwrap()
    }

    #[test]
    fn chain_is_blocked_by_middle() {
        let g = dag(&["X", "Y", "Z"], &[("X", "Y"), ("Y", "Z")]);
        assert!(!g.d_separated(&[0], &[2], &[]));
        assert!(g.d_separated(&[0], &[2], &[1]));
    }

    #[test]
    fn collider_opens_when_conditioned() {
        let g = dag(&["X", "Z", "Y"], &[("X", "Z"), ("Y", "Z")]);
        assert!(g.d_separated(&[0], &[2], &[]));
        assert!(!g.d_separated(&[0], &[2], &[1]));
    }

    #[test]
    fn descendant_of_collider_opens_it() {
        let g = dag(&["X", "Y", "C", "D"], &[("X", "C"), ("Y", "C"), ("C", "D")]);
        assert!(!g.d_separated(&[0], &[1], &[3]));
    }

    #[test]
    fn two_cycle_is_detected() {
        let g = dag(&["X", "Y", "W"], &[("X", "Y"), ("Y", "X"), ("Y", "W")]);
        let cyc: Vec<usize> = g.cycle_nodes().into_iter().collect();
        assert_eq!(cyc, vec![0, 1]);
    }

    #[test]
    fn unknown_endpoint_is_an_error() {
        assert!(Dag::from_edges(&["X"], &[("X", "Q")]).is_err());
    }
}
