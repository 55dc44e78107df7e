//! Control-flow analysis over block indices: reverse postorder,
//! dominators and natural loops.

use std::collections::BTreeSet;

/// A CFG over blocks `0..n` with entry block 0.
pub(crate) struct Cfg {
    pub succs: Vec<Vec<usize>>,
    pub preds: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct NaturalLoop {
    pub header: usize,
    pub members: BTreeSet<usize>,
    pub exits: BTreeSet<usize>,
}

impl Cfg {
    pub fn new(succs: Vec<Vec<usize>>) -> Cfg {
        let mut preds = vec![Vec::new(); succs.len()];
        for (b, ss) in succs.iter().enumerate() {
            for &s in ss {
                if !preds[s].contains(&b) {
                    preds[s].push(b);
                }
            }
        }
        Cfg { succs, preds }
    }

    /// Blocks reachable from the entry in reverse postorder.
    pub fn reverse_postorder(&self) -> Vec<usize> {
        let n = self.succs.len();
        let mut seen = vec![false; n];
        let mut post = Vec::with_capacity(n);
        if n == 0 {
            return post;
        }
        // iterative DFS with explicit successor cursors
        let mut stack = vec![(0usize, 0usize)];
        seen[0] = true;
        while let Some((b, i)) = stack.last_mut() {
            if let Some(&s) = self.succs[*b].get(*i) {
                *i += 1;
                if !seen[s] {
                    seen[s] = true;
                    stack.push((s, 0));
                }
            } else {
                post.push(*b);
                stack.pop();
            }
        }
        post.reverse();
        post
    }

    /// Immediate dominators (Cooper, Harvey and Kennedy); `None` for
    /// unreachable blocks, `Some(0)` for the entry.
    pub fn idoms(&self) -> Vec<Option<usize>> {
        let rpo = self.reverse_postorder();
        let mut order = vec![usize::MAX; self.succs.len()];
        for (i, &b) in rpo.iter().enumerate() {
            order[b] = i;
        }
        let mut idom: Vec<Option<usize>> = vec![None; self.succs.len()];
        if rpo.is_empty() {
            return idom;
        }
        idom[0] = Some(0);
        let intersect = |idom: &[Option<usize>], mut a: usize, mut b: usize| {
            while a != b {
                while order[a] > order[b] {
                    a = idom[a].unwrap();
                }
                while order[b] > order[a] {
                    b = idom[b].unwrap();
                }
            }
            a
        };
        let mut changed = true;
        while changed {
            changed = false;
            for &b in rpo.iter().skip(1) {
                let mut new = None;
                for &p in &self.preds[b] {
                    if idom[p].is_none() {
                        continue;
                    }
                    new = Some(match new {
                        None => p,
                        Some(cur) => intersect(&idom, p, cur),
                    });
                }
                if new != idom[b] {
                    idom[b] = new;
                    changed = true;
                }
            }
        }
        idom
    }

    pub fn dominates(idom: &[Option<usize>], a: usize, mut b: usize) -> bool {
        loop {
            if a == b {
                return true;
            }
            match idom[b] {
                Some(d) if d != b => b = d,
                _ => return false,
            }
        }
    }

    /// Natural loops, one per header, with the members of all back edges
    /// into that header merged. Errors with the offending target block if a
    /// retreating edge does not go to a dominator.
    pub fn natural_loops(&self) -> Result<Vec<NaturalLoop>, usize> {
        let idom = self.idoms();
        let rpo = self.reverse_postorder();
        let mut order = vec![usize::MAX; self.succs.len()];
        for (i, &b) in rpo.iter().enumerate() {
            order[b] = i;
        }
        let mut loops: Vec<NaturalLoop> = Vec::new();
        for &b in &rpo {
            for &s in &self.succs[b] {
                if order[s] > order[b] {
                    continue;
                }
                // retreating edge b -> s
                if !Self::dominates(&idom, s, b) {
                    return Err(s);
                }
                let mut members = BTreeSet::from([s]);
                let mut work = vec![b];
                while let Some(x) = work.pop() {
                    if members.insert(x) {
                        work.extend(self.preds[x].iter().copied().filter(|p| idom[*p].is_some()));
                    }
                }
                match loops.iter_mut().find(|l| l.header == s) {
                    Some(l) => l.members.extend(members),
                    None => loops.push(NaturalLoop { header: s, members, exits: BTreeSet::new() }),
                }
            }
        }
        for l in &mut loops {
            l.exits = l
                .members
                .iter()
                .flat_map(|&m| self.succs[m].iter().copied())
                .filter(|s| !l.members.contains(s))
                .collect();
        }
        loops.sort_by_key(|l| l.header);
        Ok(loops)
    }
}
