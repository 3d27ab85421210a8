//! Line-delimited execution trace. One record per spike activity (sentence
//! or inferred VI) and per diffusion sub-step, each carrying a digest of the
//! focus weights so two runs can be compared byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::ids::ComponentId;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub seq: u64,
    pub clock: f64,
    /// `sa`, `sa-inferred` or `da`.
    pub kind: String,
    pub scene: String,
    pub subject: String,
    pub verb: String,
    pub object: String,
    pub surprise: Option<f64>,
    pub digest: u64,
}

impl TraceRecord {
    pub fn render(&self) -> String {
        let mut s = String::new();
        write!(
            s,
            "seq={} clock={:.6} kind={} scene={} subject={} verb={} object={}",
            self.seq, self.clock, self.kind, self.scene, self.subject, self.verb, self.object
        )
        .unwrap();
        match self.surprise {
            Some(v) => write!(s, " surprise={v:.6}").unwrap(),
            None => s.push_str(" surprise=-"),
        }
        write!(s, " digest={:016x}", self.digest).unwrap();
        s
    }
}

/// FNV-1a over the sorted focus weight map.
pub fn weights_digest(weights: &BTreeMap<ComponentId, f64>) -> u64 {
    const OFFSET: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;
    let mut h = OFFSET;
    let mix = |bytes: &[u8], h: &mut u64| {
        for b in bytes {
            *h ^= *b as u64;
            *h = h.wrapping_mul(PRIME);
        }
    };
    for (c, w) in weights {
        mix(c.to_string().as_bytes(), &mut h);
        mix(&w.to_bits().to_le_bytes(), &mut h);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::InstanceId;

    #[test]
    fn digest_depends_on_weights() {
        let mut w = BTreeMap::new();
        w.insert(ComponentId::Instance(InstanceId(1)), 1.0);
        let a = weights_digest(&w);
        w.insert(ComponentId::Instance(InstanceId(2)), 0.5);
        let b = weights_digest(&w);
        assert_ne!(a, b);
        assert_eq!(b, weights_digest(&w));
    }

    #[test]
    fn render_is_stable() {
        let r = TraceRecord {
            seq: 3,
            clock: 1.25,
            kind: "sa".into(),
            scene: "s0".into(),
            subject: "i1".into(),
            verb: "hits".into(),
            object: "i2".into(),
            surprise: Some(1.0),
            digest: 0xdeadbeef,
        };
        assert_eq!(
            r.render(),
            "seq=3 clock=1.250000 kind=sa scene=s0 subject=i1 verb=hits object=i2 surprise=1.000000 digest=00000000deadbeef"
        );
    }
}
