//! Portable Executable headers, section table and import directory.

use serde::{Deserialize, Serialize};
use thiserror::Error;

const MAX_IMPORT_DESCRIPTORS: usize = 4096;
const MAX_THUNKS: usize = 65_536;
const MAX_NAME: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PeError {
    #[error("truncated {what} at offset 0x{offset:x}")]
    Truncated { what: &'static str, offset: usize },
    #[error("{what} RVA 0x{rva:x} does not map into any section")]
    UnmappedRva { what: &'static str, rva: u64 },
    #[error("unknown optional header magic 0x{0:x}")]
    OptionalMagic(u16),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub virtual_size: u32,
    pub virtual_address: u32,
    pub raw_size: u32,
    pub raw_pointer: u32,
    pub characteristics: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Import {
    pub dll: String,
    /// Function names; imports by ordinal appear as `#<n>`.
    pub functions: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeInfo {
    pub is_pe: bool,
    pub machine: u16,
    pub timestamp: u32,
    pub pe32_plus: bool,
    pub sections: Vec<Section>,
    pub imports: Vec<Import>,
}

impl PeInfo {
    /// `dll!function` strings in import order, dll names lower-cased.
    pub fn import_tokens(&self) -> Vec<String> {
        self.imports
            .iter()
            .flat_map(|imp| {
                let dll = imp.dll.to_ascii_lowercase();
                imp.functions.iter().map(move |f| format!("{dll}!{f}"))
            })
            .collect()
    }

    pub fn machine_name(&self) -> &'static str {
        match self.machine {
            0x014c => "i386",
            0x8664 => "amd64",
            0x01c4 => "armnt",
            0xaa64 => "arm64",
            _ => "unknown",
        }
    }
}

struct Buf<'a>(&'a [u8]);

impl Buf<'_> {
    fn bytes(&self, offset: usize, len: usize, what: &'static str) -> Result<&[u8], PeError> {
        offset
            .checked_add(len)
            .and_then(|end| self.0.get(offset..end))
            .ok_or(PeError::Truncated { what, offset })
    }

    fn u16(&self, offset: usize, what: &'static str) -> Result<u16, PeError> {
        let b = self.bytes(offset, 2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&self, offset: usize, what: &'static str) -> Result<u32, PeError> {
        let b = self.bytes(offset, 4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&self, offset: usize, what: &'static str) -> Result<u64, PeError> {
        let b = self.bytes(offset, 8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    /// NUL-terminated ASCII, at most `MAX_NAME` bytes.
    fn cstr(&self, offset: usize, what: &'static str) -> Result<String, PeError> {
        let rest = self.0.get(offset..).ok_or(PeError::Truncated { what, offset })?;
        let window = &rest[..rest.len().min(MAX_NAME)];
        let end = window
            .iter()
            .position(|&b| b == 0)
            .ok_or(PeError::Truncated { what, offset })?;
        Ok(String::from_utf8_lossy(&window[..end]).into_owned())
    }
}

fn rva_to_offset(sections: &[Section], rva: u64, len: usize, what: &'static str) -> Result<usize, PeError> {
    for s in sections {
        let va = s.virtual_address as u64;
        let span = s.virtual_size.max(s.raw_size) as u64;
        if rva >= va && rva < va + span {
            let off = s.raw_pointer as u64 + (rva - va);
            if off as usize >= len {
                break;
            }
            return Ok(off as usize);
        }
    }
    Err(PeError::UnmappedRva { what, rva })
}

/// Parses PE headers. Input without the MZ and `PE\0\0` signatures is
/// reported with `is_pe = false`; a file that has them but whose headers
/// run off the end of the buffer is an error.
pub fn parse_pe(bytes: &[u8]) -> Result<PeInfo, PeError> {
    let b = Buf(bytes);
    if !bytes.starts_with(b"MZ") {
        return Ok(PeInfo::default());
    }
    let e_lfanew = b.u32(0x3C, "DOS header")? as usize;
    let sig = b.bytes(e_lfanew, 4, "PE signature")?;
    if sig != b"PE\0\0" {
        return Ok(PeInfo::default());
    }
    let coff = e_lfanew + 4;
    let machine = b.u16(coff, "COFF header")?;
    let n_sections = b.u16(coff + 2, "COFF header")? as usize;
    let timestamp = b.u32(coff + 4, "COFF header")?;
    let opt_size = b.u16(coff + 16, "COFF header")? as usize;
    let opt = coff + 20;
    b.bytes(opt, opt_size, "optional header")?;

    let mut pe32_plus = false;
    let mut import_dir: Option<(u32, u32)> = None;
    if opt_size >= 2 {
        let magic = b.u16(opt, "optional header")?;
        let (count_at, dirs_at) = match magic {
            0x10b => (92, 96),
            0x20b => {
                pe32_plus = true;
                (108, 112)
            }
            m => return Err(PeError::OptionalMagic(m)),
        };
        if opt_size >= count_at + 4 {
            let n_dirs = b.u32(opt + count_at, "optional header")? as usize;
            if n_dirs > 1 && opt_size >= dirs_at + 16 {
                let rva = b.u32(opt + dirs_at + 8, "data directory")?;
                let size = b.u32(opt + dirs_at + 12, "data directory")?;
                if rva != 0 {
                    import_dir = Some((rva, size));
                }
            }
        }
    }

    let table = opt + opt_size;
    let mut sections = Vec::with_capacity(n_sections.min(96));
    for i in 0..n_sections {
        let at = table + i * 40;
        let raw_name = b.bytes(at, 8, "section header")?;
        let end = raw_name.iter().position(|&c| c == 0).unwrap_or(8);
        sections.push(Section {
            name: String::from_utf8_lossy(&raw_name[..end]).into_owned(),
            virtual_size: b.u32(at + 8, "section header")?,
            virtual_address: b.u32(at + 12, "section header")?,
            raw_size: b.u32(at + 16, "section header")?,
            raw_pointer: b.u32(at + 20, "section header")?,
            characteristics: b.u32(at + 36, "section header")?,
        });
    }

    let mut imports = Vec::new();
    if let Some((rva, _)) = import_dir {
        let mut at = rva_to_offset(&sections, rva as u64, bytes.len(), "import directory")?;
        for _ in 0..MAX_IMPORT_DESCRIPTORS {
            let desc = b.bytes(at, 20, "import descriptor")?;
            if desc.iter().all(|&x| x == 0) {
                break;
            }
            let oft = b.u32(at, "import descriptor")?;
            let name_rva = b.u32(at + 12, "import descriptor")?;
            let ft = b.u32(at + 16, "import descriptor")?;
            let name_off = rva_to_offset(&sections, name_rva as u64, bytes.len(), "import name")?;
            let dll = b.cstr(name_off, "import name")?;
            let thunk_rva = if oft != 0 { oft } else { ft };
            let mut functions = Vec::new();
            if thunk_rva != 0 {
                let mut t = rva_to_offset(&sections, thunk_rva as u64, bytes.len(), "import thunks")?;
                let width = if pe32_plus { 8 } else { 4 };
                let ordinal_bit = if pe32_plus { 1u64 << 63 } else { 1u64 << 31 };
                for _ in 0..MAX_THUNKS {
                    let v = if pe32_plus {
                        b.u64(t, "import thunk")?
                    } else {
                        b.u32(t, "import thunk")? as u64
                    };
                    if v == 0 {
                        break;
                    }
                    if v & ordinal_bit != 0 {
                        functions.push(format!("#{}", v & 0xFFFF));
                    } else {
                        let hint = rva_to_offset(&sections, v & 0x7FFF_FFFF, bytes.len(), "hint/name")?;
                        functions.push(b.cstr(hint + 2, "hint/name")?);
                    }
                    t += width;
                }
            }
            imports.push(Import { dll, functions });
            at += 20;
        }
    }

    Ok(PeInfo {
        is_pe: true,
        machine,
        timestamp,
        pe32_plus,
        sections,
        imports,
    })
}

/// Builds small but well-formed PE32 images: one `.text` section holding
/// arbitrary data and one `.idata` section with the import directory.
#[derive(Debug, Clone, Default)]
pub struct PeBuilder {
    pub timestamp: u32,
    pub imports: Vec<(String, Vec<String>)>,
    pub data: Vec<u8>,
}

const FILE_ALIGN: usize = 0x200;
const SECT_ALIGN: u32 = 0x1000;

fn align(n: usize, a: usize) -> usize {
    n.div_ceil(a) * a
}

impl PeBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn import(mut self, dll: &str, functions: &[&str]) -> Self {
        self.imports
            .push((dll.to_owned(), functions.iter().map(|f| (*f).to_owned()).collect()));
        self
    }

    pub fn data(mut self, data: &[u8]) -> Self {
        self.data.extend_from_slice(data);
        self
    }

    pub fn timestamp(mut self, ts: u32) -> Self {
        self.timestamp = ts;
        self
    }

    pub fn build(&self) -> Vec<u8> {
        const E_LFANEW: usize = 0x80;
        const OPT_SIZE: usize = 224;
        let headers_end = E_LFANEW + 4 + 20 + OPT_SIZE + 2 * 40;
        let text_raw = FILE_ALIGN.max(align(headers_end, FILE_ALIGN));
        let text_size = align(self.data.len().max(1), FILE_ALIGN);
        let idata_raw = text_raw + text_size;
        let text_va = SECT_ALIGN;
        let idata_va = text_va + align(text_size, SECT_ALIGN as usize) as u32;

        // import section: descriptors, then per dll: thunks, name, hint/names
        let mut idata: Vec<u8> = vec![0; (self.imports.len() + 1) * 20];
        for (i, (dll, funcs)) in self.imports.iter().enumerate() {
            let thunks_at = idata.len();
            idata.resize(thunks_at + (funcs.len() + 1) * 4, 0);
            let name_at = idata.len();
            idata.extend_from_slice(dll.as_bytes());
            idata.push(0);
            for (j, f) in funcs.iter().enumerate() {
                if idata.len() % 2 == 1 {
                    idata.push(0);
                }
                let hint_at = idata.len();
                idata.extend_from_slice(&0u16.to_le_bytes());
                idata.extend_from_slice(f.as_bytes());
                idata.push(0);
                let rva = idata_va + hint_at as u32;
                idata[thunks_at + 4 * j..thunks_at + 4 * j + 4].copy_from_slice(&rva.to_le_bytes());
            }
            let d = i * 20;
            let thunk_rva = idata_va + thunks_at as u32;
            idata[d..d + 4].copy_from_slice(&thunk_rva.to_le_bytes());
            idata[d + 12..d + 16].copy_from_slice(&(idata_va + name_at as u32).to_le_bytes());
            idata[d + 16..d + 20].copy_from_slice(&thunk_rva.to_le_bytes());
        }
        let idata_len = idata.len();
        let idata_size = align(idata_len.max(1), FILE_ALIGN);

        let mut out = vec![0u8; idata_raw + idata_size];
        out[0..2].copy_from_slice(b"MZ");
        out[0x3C..0x40].copy_from_slice(&(E_LFANEW as u32).to_le_bytes());
        out[0x40..0x40 + 39].copy_from_slice(b"This program cannot be run in DOS mode.");
        let mut p = E_LFANEW;
        out[p..p + 4].copy_from_slice(b"PE\0\0");
        p += 4;
        let put16 = |o: &mut [u8], at: usize, v: u16| o[at..at + 2].copy_from_slice(&v.to_le_bytes());
        let put32 = |o: &mut [u8], at: usize, v: u32| o[at..at + 4].copy_from_slice(&v.to_le_bytes());
        put16(&mut out, p, 0x014c);
        put16(&mut out, p + 2, 2);
        put32(&mut out, p + 4, self.timestamp);
        put16(&mut out, p + 16, OPT_SIZE as u16);
        put16(&mut out, p + 18, 0x0102);
        let opt = p + 20;
        put16(&mut out, opt, 0x10b);
        put32(&mut out, opt + 16, text_va); // entry point
        put32(&mut out, opt + 28, 0x0040_0000); // image base
        put32(&mut out, opt + 32, SECT_ALIGN);
        put32(&mut out, opt + 36, FILE_ALIGN as u32);
        put16(&mut out, opt + 40, 4);
        put32(
            &mut out,
            opt + 56,
            idata_va + align(idata_size, SECT_ALIGN as usize) as u32,
        );
        put32(&mut out, opt + 60, text_raw as u32);
        put16(&mut out, opt + 68, 3); // console subsystem
        put32(&mut out, opt + 92, 16);
        if !self.imports.is_empty() {
            put32(&mut out, opt + 96 + 8, idata_va);
            put32(&mut out, opt + 96 + 12, idata_len as u32);
        }
        let sect = opt + OPT_SIZE;
        let sections = [
            (
                b".text\0\0\0",
                self.data.len(),
                text_va,
                text_size,
                text_raw,
                0x6000_0020u32,
            ),
            (
                b".idata\0\0",
                idata_len,
                idata_va,
                idata_size,
                idata_raw,
                0xC000_0040u32,
            ),
        ];
        for (i, (name, vsize, va, rsize, rptr, ch)) in sections.into_iter().enumerate() {
            let at = sect + i * 40;
            out[at..at + 8].copy_from_slice(name);
            put32(&mut out, at + 8, vsize as u32);
            put32(&mut out, at + 12, va);
            put32(&mut out, at + 16, rsize as u32);
            put32(&mut out, at + 20, rptr as u32);
            put32(&mut out, at + 36, ch);
        }
        out[text_raw..text_raw + self.data.len()].copy_from_slice(&self.data);
        out[idata_raw..idata_raw + idata_len].copy_from_slice(&idata);
        out
    }
}
