//! Sidelink channel numerology.
//!
//! A subframe is split into `n_subch` sub-channels of `subchannel_size` RBs.
//! A transmission occupies `l_subch` consecutive sub-channels; in the adjacent
//! PSCCH scheme the first two RBs of the allocation carry the SCI and the rest
//! carry the transport block.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::sync::OnceLock;

use crate::{Error, Result, Subframe};

/// RBs taken by one SCI (PSCCH) transmission.
pub const SCI_RBS: u32 = 2;
/// SC-FDMA symbols per subcarrier available for data in a sidelink subframe.
pub const DATA_SYMBOLS_PER_SUBCARRIER: u32 = 9;
pub const SUBCARRIERS_PER_RB: u32 = 12;

/// Highest MCS index usable on the sidelink (16-QAM ceiling).
pub const MAX_MCS_INDEX: u32 = 20;

const ADJACENT_SUBCHANNEL_SIZES: &[u32] = &[5, 6, 10, 15, 20, 25, 50, 75, 100];
const NON_ADJACENT_SUBCHANNEL_SIZES: &[u32] =
    &[4, 5, 6, 8, 9, 10, 12, 15, 16, 18, 20, 30, 48, 72, 96];
const SUBCHANNEL_COUNTS: &[u32] = &[1, 3, 5, 8, 10, 15, 20];

const TBS_ASSET: &str = include_str!("../assets/tbs_36213_v14.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PscchScheme {
    #[default]
    Adjacent,
    NonAdjacent,
}

impl fmt::Display for PscchScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PscchScheme::Adjacent => f.write_str("adjacent"),
            PscchScheme::NonAdjacent => f.write_str("non_adjacent"),
        }
    }
}

impl FromStr for PscchScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adjacent" => Ok(PscchScheme::Adjacent),
            "non_adjacent" | "nonadjacent" => Ok(PscchScheme::NonAdjacent),
            other => Err(Error::config(format!(
                "unknown PSCCH scheme {other:?} (expected adjacent or non_adjacent)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    /// Usable RBs per subframe, guard band already removed.
    pub bandwidth_rbs: u32,
    pub subchannel_size: u32,
    /// Sub-channels per transmission.
    pub l_subch: u32,
    pub mcs_index: u32,
    pub pscch_scheme: PscchScheme,
    /// RBs of the PSSCH allocation. In the adjacent scheme this includes the
    /// two SCI RBs at its start.
    pub n_pssch_rb: u32,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            bandwidth_rbs: 50,
            subchannel_size: 10,
            l_subch: 2,
            mcs_index: 5,
            pscch_scheme: PscchScheme::Adjacent,
            n_pssch_rb: 20,
        }
    }
}

impl GridConfig {
    pub fn n_subch(&self) -> u32 {
        self.bandwidth_rbs / self.subchannel_size.max(1)
    }

    pub fn csrs_per_subframe(&self) -> u32 {
        csrs_per_subframe(self.n_subch(), self.l_subch)
    }

    /// RBs carrying the transport block.
    pub fn tb_rbs(&self) -> u32 {
        match self.pscch_scheme {
            PscchScheme::Adjacent => self.n_pssch_rb.saturating_sub(SCI_RBS),
            PscchScheme::NonAdjacent => self.n_pssch_rb,
        }
    }

    pub fn mcs(&self) -> Result<McsEntry> {
        mcs_entry(self.mcs_index)
    }

    /// Largest MAC PDU (bits) one transmission can carry.
    pub fn tb_capacity_bits(&self) -> Result<u32> {
        tb_size(self.mcs_index, self.tb_rbs())
    }

    /// Checks internal consistency. With `strict`, the sub-channel size and
    /// count must also be values the RRC configuration can signal.
    pub fn validate(&self, strict: bool) -> Result<()> {
        if self.bandwidth_rbs == 0 {
            return Err(Error::config("grid.bandwidth_rbs must be positive"));
        }
        let n_subch = subchannel_count(self.bandwidth_rbs, self.subchannel_size)?;
        if n_subch == 0 {
            return Err(Error::config(format!(
                "grid.subchannel_size {} exceeds grid.bandwidth_rbs {}",
                self.subchannel_size, self.bandwidth_rbs
            )));
        }
        if self.l_subch == 0 || self.l_subch > n_subch {
            return Err(Error::config(format!(
                "grid.l_subch {} must lie in 1..={n_subch} (sub-channels per subframe)",
                self.l_subch
            )));
        }
        mcs_entry(self.mcs_index)?;
        let span = self.l_subch * self.subchannel_size;
        match self.pscch_scheme {
            PscchScheme::Adjacent => {
                if self.n_pssch_rb <= SCI_RBS || self.n_pssch_rb > span {
                    return Err(Error::config(format!(
                        "grid.n_pssch_rb {} must hold {SCI_RBS} SCI RBs plus data within \
                         grid.l_subch x grid.subchannel_size = {span} RBs",
                        self.n_pssch_rb
                    )));
                }
            }
            PscchScheme::NonAdjacent => {
                if self.n_pssch_rb == 0 || self.n_pssch_rb > span {
                    return Err(Error::config(format!(
                        "grid.n_pssch_rb {} must lie in 1..={span} (grid.l_subch x grid.subchannel_size)",
                        self.n_pssch_rb
                    )));
                }
            }
        }
        if strict {
            let sizes = match self.pscch_scheme {
                PscchScheme::Adjacent => ADJACENT_SUBCHANNEL_SIZES,
                PscchScheme::NonAdjacent => NON_ADJACENT_SUBCHANNEL_SIZES,
            };
            if !sizes.contains(&self.subchannel_size) {
                return Err(Error::config(format!(
                    "grid.subchannel_size {} is not a signalable size for the {} scheme {sizes:?} \
                     (use --strict false to allow it)",
                    self.subchannel_size, self.pscch_scheme
                )));
            }
            if !SUBCHANNEL_COUNTS.contains(&n_subch) {
                return Err(Error::config(format!(
                    "{n_subch} sub-channels is not a signalable count {SUBCHANNEL_COUNTS:?} \
                     (use --strict false to allow it)"
                )));
            }
        }
        Ok(())
    }
}

/// Candidate single-subframe resource: `l_subch` sub-channels starting at
/// `start_subch` in `subframe`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Csr {
    pub subframe: Subframe,
    pub start_subch: u32,
    pub l_subch: u32,
}

impl Csr {
    pub fn new(subframe: Subframe, start_subch: u32, l_subch: u32) -> Self {
        Csr {
            subframe,
            start_subch,
            l_subch,
        }
    }

    pub fn subchannels(&self) -> Range<u32> {
        self.start_subch..self.start_subch + self.l_subch
    }

    pub fn overlaps_subchannels(&self, start: u32, len: u32) -> bool {
        self.start_subch < start + len && start < self.start_subch + self.l_subch
    }

    /// The same frequency allocation `delta` subframes later.
    pub fn shifted(&self, delta: Subframe) -> Csr {
        Csr {
            subframe: self.subframe + delta,
            ..*self
        }
    }
}

impl fmt::Display for Csr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}+{}", self.subframe, self.start_subch, self.l_subch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McsEntry {
    pub mcs_index: u32,
    /// Bits per modulation symbol.
    pub q: u32,
    pub i_tbs: u32,
}

impl McsEntry {
    pub fn tb_size_bits(&self, n_rb: u32) -> Result<u32> {
        tbs_table().lookup(self.i_tbs, n_rb)
    }
}

/// PUSCH-style MCS table reused by the PSSCH: indices 0-10 are QPSK
/// (I_TBS = MCS), 11-20 are 16-QAM (I_TBS = MCS - 1).
pub fn mcs_entry(mcs_index: u32) -> Result<McsEntry> {
    match mcs_index {
        0..=10 => Ok(McsEntry {
            mcs_index,
            q: 2,
            i_tbs: mcs_index,
        }),
        11..=MAX_MCS_INDEX => Ok(McsEntry {
            mcs_index,
            q: 4,
            i_tbs: mcs_index - 1,
        }),
        _ => Err(Error::Lookup(format!(
            "MCS index {mcs_index} outside 0..={MAX_MCS_INDEX}"
        ))),
    }
}

/// Transport block sizes indexed by (I_TBS, N_PRB).
#[derive(Debug, Clone, PartialEq)]
pub struct TbsTable {
    rows: Vec<Vec<u32>>,
}

impl TbsTable {
    /// Parses the whitespace-separated asset format: `#` comment lines, then
    /// one row per I_TBS with N_PRB = 1, 2, ... in successive columns.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<u32>().map_err(|e| Error::Parse {
                        file: "tbs table".into(),
                        line: lineno + 1,
                        msg: format!("bad entry {tok:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let width = rows.first().map(Vec::len).unwrap_or(0);
        if width == 0 || rows.iter().any(|r| r.len() != width) {
            return Err(Error::Parse {
                file: "tbs table".into(),
                line: 0,
                msg: "rows must be non-empty and of equal length".into(),
            });
        }
        Ok(TbsTable { rows })
    }

    pub fn n_itbs(&self) -> u32 {
        self.rows.len() as u32
    }

    pub fn max_prb(&self) -> u32 {
        self.rows[0].len() as u32
    }

    pub fn lookup(&self, i_tbs: u32, n_prb: u32) -> Result<u32> {
        if n_prb == 0 || n_prb > self.max_prb() {
            return Err(Error::Lookup(format!(
                "N_PRB {n_prb} outside 1..={}",
                self.max_prb()
            )));
        }
        self.rows
            .get(i_tbs as usize)
            .map(|row| row[n_prb as usize - 1])
            .ok_or_else(|| Error::Lookup(format!("I_TBS {i_tbs} outside table")))
    }

    fn row(&self, i_tbs: u32) -> &[u32] {
        &self.rows[i_tbs as usize]
    }
}

/// The embedded TS 36.213 table.
pub fn tbs_table() -> &'static TbsTable {
    static TABLE: OnceLock<TbsTable> = OnceLock::new();
    TABLE.get_or_init(|| TbsTable::parse(TBS_ASSET).expect("embedded TBS asset is well-formed"))
}

pub fn subchannel_count(bandwidth_rbs: u32, subchannel_size: u32) -> Result<u32> {
    if subchannel_size == 0 {
        return Err(Error::config("grid.subchannel_size must be positive"));
    }
    Ok(bandwidth_rbs / subchannel_size)
}

/// CSR starts are restricted to multiples of `l_subch`, so CSRs never overlap.
pub fn csrs_per_subframe(n_subch: u32, l_subch: u32) -> u32 {
    if l_subch == 0 {
        return 0;
    }
    n_subch / l_subch
}

pub fn tb_size(mcs_index: u32, n_rb: u32) -> Result<u32> {
    mcs_entry(mcs_index)?.tb_size_bits(n_rb)
}

/// TB bits over the coded-bit budget of `n_rb` RBs (9 data symbols on each of
/// 12 subcarriers per RB).
pub fn effective_code_rate(tb_size_bits: u32, q: u32, n_rb: u32) -> f64 {
    let coded_bits = q * DATA_SYMBOLS_PER_SUBCARRIER * SUBCARRIERS_PER_RB * n_rb;
    f64::from(tb_size_bits) / f64::from(coded_bits)
}

/// Smallest RB count whose TB holds `payload_bits`, searched up to `max_rbs`.
pub fn min_rbs_for_payload(mcs_index: u32, payload_bits: u32, max_rbs: u32) -> Result<u32> {
    let entry = mcs_entry(mcs_index)?;
    let table = tbs_table();
    let row = table.row(entry.i_tbs);
    let limit = (max_rbs.min(table.max_prb())) as usize;
    let idx = row[..limit].partition_point(|&tbs| tbs < payload_bits);
    if idx == limit {
        return Err(Error::Capacity(format!(
            "{payload_bits} bits do not fit in {max_rbs} RBs at MCS {mcs_index}"
        )));
    }
    Ok(idx as u32 + 1)
}

/// Effective code rate of the smallest allocation that carries `payload_bits`
/// at `mcs_index`, or `None` when it does not fit in `max_rbs`.
pub fn payload_code_rate(mcs_index: u32, payload_bits: u32, max_rbs: u32) -> Option<(u32, f64)> {
    let entry = mcs_entry(mcs_index).ok()?;
    let n_rb = min_rbs_for_payload(mcs_index, payload_bits, max_rbs).ok()?;
    let tbs = entry.tb_size_bits(n_rb).ok()?;
    Some((n_rb, effective_code_rate(tbs, entry.q, n_rb)))
}
