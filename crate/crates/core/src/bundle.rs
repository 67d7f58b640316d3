//! Single-file model bundle: magic `AFE1`, version u16, then length-prefixed
//! sections. All integers and floats are little-endian; floats are 64-bit.
//! Serialization is canonical, so identical models produce identical bytes.

use std::fs;
use std::io::{Cursor, Read as IoRead, Write as IoWrite};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::ensemble::{BaseBank, BaseLearner, EnsembleModel, PreprocState, TaggedLearner};
use crate::error::{Error, Result};
use crate::features::{FrameParams, WindowKind};
use crate::nn::{bpnn_arch, cnn_arch, NnModel};
use crate::preprocess::{OutlierModel, Scaler};
use crate::select::{DropStage, SelectionMask};
use crate::svm::{BinarySvm, SvmHyper, SvmModel};

pub const MAGIC: &[u8; 4] = b"AFE1";
pub const VERSION: u16 = 1;

const SECTION_PREPROC: u8 = 1;
const SECTION_BANK: u8 = 2;
const SECTION_META: u8 = 3;

fn bundle_err(e: std::io::Error) -> Error {
    Error::bundle(format!("truncated or corrupt bundle: {e}"))
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Writer {
        Writer { buf: Vec::new() }
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.write_u32::<LittleEndian>(v).unwrap();
    }
    fn u64(&mut self, v: u64) {
        self.buf.write_u64::<LittleEndian>(v).unwrap();
    }
    fn f64(&mut self, v: f64) {
        self.buf.write_f64::<LittleEndian>(v).unwrap();
    }
    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for &x in v {
            self.f64(x);
        }
    }
    fn u64s(&mut self, v: &[u64]) {
        self.u64(v.len() as u64);
        for &x in v {
            self.u64(x);
        }
    }
    fn string(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.buf.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    cur: Cursor<&'a [u8]>,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Reader<'a> {
        Reader { cur: Cursor::new(bytes) }
    }
    fn u8(&mut self) -> Result<u8> {
        self.cur.read_u8().map_err(bundle_err)
    }
    fn u32(&mut self) -> Result<u32> {
        self.cur.read_u32::<LittleEndian>().map_err(bundle_err)
    }
    fn u64(&mut self) -> Result<u64> {
        self.cur.read_u64::<LittleEndian>().map_err(bundle_err)
    }
    fn f64(&mut self) -> Result<f64> {
        self.cur.read_f64::<LittleEndian>().map_err(bundle_err)
    }
    fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        if n > 1 << 32 {
            return Err(Error::bundle(format!("implausible length {n}")));
        }
        Ok(n as usize)
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len()?;
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(self.f64()?);
        }
        Ok(v)
    }
    fn u64s(&mut self) -> Result<Vec<u64>> {
        let n = self.len()?;
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(self.u64()?);
        }
        Ok(v)
    }
    fn string(&mut self) -> Result<String> {
        let n = self.len()?;
        let mut raw = vec![0u8; n];
        self.cur.read_exact(&mut raw).map_err(bundle_err)?;
        String::from_utf8(raw).map_err(|_| Error::bundle("non-utf8 string".to_string()))
    }
    fn done(&mut self) -> bool {
        self.cur.position() as usize >= self.cur.get_ref().len()
    }
}

fn write_svm(w: &mut Writer, m: &SvmModel) {
    w.f64(m.hyper.c);
    w.f64(m.hyper.gamma);
    w.u64(m.train_hash);
    w.u64(m.machines.len() as u64);
    for b in &m.machines {
        w.f64(b.bias);
        w.f64(b.hyper.c);
        w.f64(b.hyper.gamma);
        w.f64s(&b.coef);
        w.u64(b.support_vectors.len() as u64);
        for sv in &b.support_vectors {
            w.f64s(sv);
        }
    }
}

fn read_svm(r: &mut Reader) -> Result<SvmModel> {
    let hyper = SvmHyper::new(r.f64()?, r.f64()?)
        .map_err(|e| Error::bundle(format!("svm hyperparameters: {e}")))?;
    let train_hash = r.u64()?;
    let n_machines = r.len()?;
    if n_machines != 3 {
        return Err(Error::bundle(format!("svm with {n_machines} machines, expected 3")));
    }
    let mut machines = Vec::with_capacity(3);
    for _ in 0..3 {
        let bias = r.f64()?;
        let h = SvmHyper::new(r.f64()?, r.f64()?)
            .map_err(|e| Error::bundle(format!("binary svm hyperparameters: {e}")))?;
        let coef = r.f64s()?;
        let n_sv = r.len()?;
        let mut support_vectors = Vec::with_capacity(n_sv);
        for _ in 0..n_sv {
            support_vectors.push(r.f64s()?);
        }
        if support_vectors.len() != coef.len() {
            return Err(Error::bundle("coef/support-vector count mismatch".to_string()));
        }
        machines.push(BinarySvm {
            support_vectors,
            coef,
            bias,
            hyper: h,
        });
    }
    Ok(SvmModel {
        machines,
        hyper,
        train_hash,
    })
}

fn write_nn(w: &mut Writer, m: &NnModel) {
    w.string(&m.arch.name);
    w.u64(m.arch.input_width as u64);
    w.u64(m.rng_seed);
    w.u64(m.epochs_trained as u64);
    w.f64s(&m.param_vector());
}

fn read_nn(r: &mut Reader) -> Result<NnModel> {
    let name = r.string()?;
    let input_width = r.len()?;
    let rng_seed = r.u64()?;
    let epochs_trained = r.len()?;
    let arch = match name.as_str() {
        "cnn" => cnn_arch(input_width),
        "bpnn" => bpnn_arch(input_width),
        other => Err(Error::bundle(format!("unknown architecture {other}"))),
    }?;
    let mut model = NnModel::init(arch, rng_seed);
    let params = r.f64s()?;
    model
        .set_param_vector(&params)
        .map_err(|e| Error::bundle(format!("nn parameters: {e}")))?;
    model.epochs_trained = epochs_trained;
    Ok(model)
}

fn write_preproc(w: &mut Writer, p: &PreprocState) {
    w.u64(p.frame_params.frame_length as u64);
    w.u64(p.frame_params.hop as u64);
    w.u8(match p.frame_params.window {
        WindowKind::Hann => 0,
    });
    w.f64(p.frame_params.rolloff_fraction);
    w.u32(p.sample_rate);
    w.f64s(&p.outlier.q1);
    w.f64s(&p.outlier.q3);
    w.f64s(&p.outlier.median);
    w.f64s(&p.outlier.lower_fence);
    w.f64s(&p.outlier.upper_fence);
    w.f64s(&p.scaler.x_min);
    w.f64s(&p.scaler.x_max);
    w.u64(p.mask.keep.len() as u64);
    for (i, &k) in p.mask.keep.iter().enumerate() {
        // 0 = kept, otherwise the dropping stage's code
        w.u8(if k {
            0
        } else {
            p.mask.provenance[i].map(DropStage::code).unwrap_or(0xff)
        });
    }
}

fn read_preproc(r: &mut Reader) -> Result<PreprocState> {
    let frame_length = r.len()?;
    let hop = r.len()?;
    let window = match r.u8()? {
        0 => WindowKind::Hann,
        k => return Err(Error::bundle(format!("unknown window kind {k}"))),
    };
    let rolloff_fraction = r.f64()?;
    let sample_rate = r.u32()?;
    let frame_params = FrameParams {
        frame_length,
        hop,
        window,
        rolloff_fraction,
    };
    frame_params
        .validate()
        .map_err(|e| Error::bundle(format!("frame params: {e}")))?;
    let outlier = OutlierModel {
        q1: r.f64s()?,
        q3: r.f64s()?,
        median: r.f64s()?,
        lower_fence: r.f64s()?,
        upper_fence: r.f64s()?,
    };
    let scaler = Scaler {
        x_min: r.f64s()?,
        x_max: r.f64s()?,
    };
    let n = r.len()?;
    let mut keep = Vec::with_capacity(n);
    let mut provenance = Vec::with_capacity(n);
    for _ in 0..n {
        match r.u8()? {
            0 => {
                keep.push(true);
                provenance.push(None);
            }
            code => {
                let stage = DropStage::from_code(code)
                    .ok_or_else(|| Error::bundle(format!("unknown drop stage {code}")))?;
                keep.push(false);
                provenance.push(Some(stage));
            }
        }
    }
    Ok(PreprocState {
        frame_params,
        sample_rate,
        outlier,
        scaler,
        mask: SelectionMask { keep, provenance },
    })
}

fn write_section(out: &mut Vec<u8>, id: u8, body: &[u8]) {
    out.push(id);
    out.write_u64::<LittleEndian>(body.len() as u64).unwrap();
    out.extend_from_slice(body);
}

/// Serialize a model to bytes.
pub fn to_bytes(model: &EnsembleModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.write_u16::<LittleEndian>(VERSION).unwrap();

    let mut w = Writer::new();
    write_preproc(&mut w, &model.preproc);
    write_section(&mut out, SECTION_PREPROC, &w.buf);

    let mut w = Writer::new();
    w.u64(model.bank.len() as u64);
    for m in model.bank.members() {
        w.string(&m.tag);
        match &m.learner {
            BaseLearner::Svm(s) => {
                w.u8(0);
                write_svm(&mut w, s);
            }
            BaseLearner::Nn(n) => {
                w.u8(1);
                write_nn(&mut w, n);
            }
        }
        w.u64s(&m.train_hashes);
    }
    write_section(&mut out, SECTION_BANK, &w.buf);

    let mut w = Writer::new();
    write_svm(&mut w, &model.meta);
    w.f64s(&model.meta_scaler.x_min);
    w.f64s(&model.meta_scaler.x_max);
    w.f64(model.meta_best.0);
    w.f64(model.meta_best.1);
    write_section(&mut out, SECTION_META, &w.buf);

    out
}

/// Deserialize; rejects wrong magic or version before reading anything else.
pub fn from_bytes(bytes: &[u8]) -> Result<EnsembleModel> {
    if bytes.len() < 6 || &bytes[0..4] != MAGIC {
        return Err(Error::bundle("bad magic: not a model bundle".to_string()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::bundle(format!(
            "unsupported bundle version {version}, expected {VERSION}"
        )));
    }
    let mut preproc = None;
    let mut bank = None;
    let mut meta = None;
    let mut r = Reader::new(&bytes[6..]);
    while !r.done() {
        let id = r.u8()?;
        let len = r.len()?;
        let start = r.cur.position() as usize;
        let all = *r.cur.get_ref();
        if start + len > all.len() {
            return Err(Error::bundle("section overruns bundle".to_string()));
        }
        let mut section = Reader::new(&all[start..start + len]);
        match id {
            SECTION_PREPROC => preproc = Some(read_preproc(&mut section)?),
            SECTION_BANK => {
                let n = section.len()?;
                let mut members = Vec::with_capacity(n);
                for _ in 0..n {
                    let tag = section.string()?;
                    let learner = match section.u8()? {
                        0 => BaseLearner::Svm(read_svm(&mut section)?),
                        1 => BaseLearner::Nn(read_nn(&mut section)?),
                        k => return Err(Error::bundle(format!("unknown learner kind {k}"))),
                    };
                    let train_hashes = section.u64s()?;
                    members.push(TaggedLearner {
                        tag,
                        learner,
                        train_hashes,
                    });
                }
                bank = Some(BaseBank::new(members).map_err(|e| Error::bundle(e.to_string()))?);
            }
            SECTION_META => {
                let m = read_svm(&mut section)?;
                let scaler = Scaler {
                    x_min: section.f64s()?,
                    x_max: section.f64s()?,
                };
                let best = (section.f64()?, section.f64()?);
                meta = Some((m, scaler, best));
            }
            k => return Err(Error::bundle(format!("unknown section id {k}"))),
        }
        r.cur.set_position((start + len) as u64);
    }
    let preproc = preproc.ok_or_else(|| Error::bundle("missing preprocessing section".to_string()))?;
    let bank = bank.ok_or_else(|| Error::bundle("missing base-learner section".to_string()))?;
    let (meta, meta_scaler, meta_best) =
        meta.ok_or_else(|| Error::bundle("missing meta section".to_string()))?;
    Ok(EnsembleModel {
        bank,
        meta,
        meta_scaler,
        preproc,
        meta_best,
    })
}

/// Write the bundle to disk.
pub fn save(model: &EnsembleModel, path: &Path) -> Result<()> {
    let bytes = to_bytes(model);
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

/// Read a bundle from disk.
pub fn load(path: &Path) -> Result<EnsembleModel> {
    let bytes = fs::read(path)?;
    from_bytes(&bytes)
}
