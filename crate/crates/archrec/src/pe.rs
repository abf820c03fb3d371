//! Import-table extraction from Windows PE executables.
//!
//! Only the import directory of PE32 and PE32+ images is read; delay-load and
//! bound imports are skipped. Managed (.NET) assemblies are not analyzed
//! beyond their CLR entry dependency. All reads are bounds-checked so that
//! arbitrary input yields an error, never a crash.

use thiserror::Error;

/// One import-directory entry: the DLLs and symbols an executable links
/// against at load time. Ordinal imports are rendered `ord#<n>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImportEntry {
    pub importer: String,
    pub imported_dll: String,
    pub symbols: Vec<String>,
}

/// Symbol placeholder reported for managed assemblies, whose metadata is not
/// parsed.
pub const NOT_SUPPORTED_MARKER: &str = "<not-supported:managed-assembly>";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PeError {
    #[error("not a PE image")]
    NotPe,
    #[error("truncated or malformed buffer")]
    TruncatedBuffer,
    #[error("RVA 0x{0:x} not covered by any section")]
    BadRva(u32),
}

const DOS_MAGIC: &[u8; 2] = b"MZ";
const PE_SIGNATURE: u32 = 0x0000_4550; // "PE\0\0"
const OPT_MAGIC_PE32: u16 = 0x10b;
const OPT_MAGIC_PE32PLUS: u16 = 0x20b;
const DIR_IMPORT: usize = 1;
const DIR_CLR: usize = 14;
const MAX_IMPORT_DESCRIPTORS: usize = 4096;
const MAX_THUNKS: usize = 65536;
const MAX_NAME: usize = 4096;

fn read_u16(buf: &[u8], off: usize) -> Result<u16, PeError> {
    let end = off.checked_add(2).ok_or(PeError::TruncatedBuffer)?;
    let bytes = buf.get(off..end).ok_or(PeError::TruncatedBuffer)?;
    Ok(u16::from_le_bytes([bytes[0], bytes[1]]))
}

fn read_u32(buf: &[u8], off: usize) -> Result<u32, PeError> {
    let end = off.checked_add(4).ok_or(PeError::TruncatedBuffer)?;
    let bytes = buf.get(off..end).ok_or(PeError::TruncatedBuffer)?;
    Ok(u32::from_le_bytes(bytes.try_into().unwrap()))
}

fn read_u64(buf: &[u8], off: usize) -> Result<u64, PeError> {
    let end = off.checked_add(8).ok_or(PeError::TruncatedBuffer)?;
    let bytes = buf.get(off..end).ok_or(PeError::TruncatedBuffer)?;
    Ok(u64::from_le_bytes(bytes.try_into().unwrap()))
}

/// NUL-terminated ASCII-ish string, bounded by the buffer and a sanity cap.
fn read_cstr(buf: &[u8], off: usize) -> Result<String, PeError> {
    let tail = buf.get(off..).ok_or(PeError::TruncatedBuffer)?;
    let limit = tail.len().min(MAX_NAME);
    match tail[..limit].iter().position(|&b| b == 0) {
        Some(end) => Ok(String::from_utf8_lossy(&tail[..end]).into_owned()),
        None => Err(PeError::TruncatedBuffer),
    }
}

#[derive(Debug, Clone, Copy)]
struct Section {
    virtual_address: u32,
    raw_offset: u32,
    raw_size: u32,
}

struct Image<'a> {
    buf: &'a [u8],
    sections: Vec<Section>,
    header_limit: u32,
}

impl<'a> Image<'a> {
    /// Translates an RVA to a file offset via the section headers. RVAs below
    /// the first section map identically (header-resident data).
    fn rva_to_off(&self, rva: u32) -> Result<usize, PeError> {
        for s in &self.sections {
            if rva >= s.virtual_address {
                let delta = rva - s.virtual_address;
                if delta < s.raw_size {
                    let off = s.raw_offset as u64 + delta as u64;
                    if (off as usize) < self.buf.len() {
                        return Ok(off as usize);
                    }
                    return Err(PeError::TruncatedBuffer);
                }
            }
        }
        if rva < self.header_limit && (rva as usize) < self.buf.len() {
            return Ok(rva as usize);
        }
        Err(PeError::BadRva(rva))
    }
}

/// Extracts the import directory of a PE image.
///
/// The buffer must start with the MZ signature; `e_lfanew` at offset 0x3C
/// locates the `PE\0\0` header. One [`ImportEntry`] is produced per
/// import-directory entry, in table order, with DLL names canonicalized to
/// lower case. Managed assemblies (CLR header present) are reported as a
/// single entry for `mscoree.dll` carrying [`NOT_SUPPORTED_MARKER`].
pub fn parse_pe_imports(buf: &[u8], importer: &str) -> Result<Vec<ImportEntry>, PeError> {
    let importer = importer.to_lowercase();
    if buf.len() < 2 {
        return Err(PeError::TruncatedBuffer);
    }
    if &buf[..2] != DOS_MAGIC {
        return Err(PeError::NotPe);
    }
    let e_lfanew = read_u32(buf, 0x3c)? as usize;
    if read_u32(buf, e_lfanew)? != PE_SIGNATURE {
        return Err(PeError::NotPe);
    }

    let coff = e_lfanew.checked_add(4).ok_or(PeError::TruncatedBuffer)?;
    let number_of_sections = read_u16(buf, coff + 2)? as usize;
    let size_of_optional_header = read_u16(buf, coff + 16)? as usize;

    let opt = coff + 20;
    let magic = read_u16(buf, opt)?;
    let (dir_base, nrva_off, wide_thunks) = match magic {
        OPT_MAGIC_PE32 => (opt + 96, opt + 92, false),
        OPT_MAGIC_PE32PLUS => (opt + 112, opt + 108, true),
        _ => return Err(PeError::NotPe),
    };
    let number_of_rva_and_sizes = read_u32(buf, nrva_off)? as usize;
    let size_of_headers = read_u32(buf, opt + 60)?;

    let mut sections = Vec::with_capacity(number_of_sections.min(96));
    let section_table = opt + size_of_optional_header;
    for i in 0..number_of_sections {
        let s = section_table + i * 40;
        sections.push(Section {
            virtual_address: read_u32(buf, s + 12)?,
            raw_size: read_u32(buf, s + 16)?,
            raw_offset: read_u32(buf, s + 20)?,
        });
    }
    let first_va = sections.iter().map(|s| s.virtual_address).min().unwrap_or(u32::MAX);
    let image = Image { buf, sections, header_limit: size_of_headers.min(first_va) };

    let directory = |index: usize| -> Result<Option<(u32, u32)>, PeError> {
        if index >= number_of_rva_and_sizes {
            return Ok(None);
        }
        let rva = read_u32(buf, dir_base + index * 8)?;
        let size = read_u32(buf, dir_base + index * 8 + 4)?;
        Ok(if rva != 0 && size != 0 { Some((rva, size)) } else { None })
    };

    if directory(DIR_CLR)?.is_some() {
        return Ok(vec![ImportEntry {
            importer,
            imported_dll: "mscoree.dll".to_string(),
            symbols: vec![NOT_SUPPORTED_MARKER.to_string()],
        }]);
    }

    let (import_rva, _) = match directory(DIR_IMPORT)? {
        Some(dir) => dir,
        None => return Ok(Vec::new()),
    };

    let mut entries = Vec::new();
    let table_off = image.rva_to_off(import_rva)?;
    for i in 0.. {
        if i >= MAX_IMPORT_DESCRIPTORS {
            return Err(PeError::TruncatedBuffer);
        }
        let d = table_off + i * 20;
        let lookup_rva = read_u32(buf, d)?;
        let name_rva = read_u32(buf, d + 12)?;
        let address_rva = read_u32(buf, d + 16)?;
        let zeroed = lookup_rva == 0
            && read_u32(buf, d + 4)? == 0
            && read_u32(buf, d + 8)? == 0
            && name_rva == 0
            && address_rva == 0;
        if zeroed {
            break;
        }
        let imported_dll = read_cstr(buf, image.rva_to_off(name_rva)?)?.to_lowercase();
        if imported_dll.is_empty() {
            continue;
        }
        // Prefer the lookup table; bound images may have rewritten the IAT.
        let thunks_rva = if lookup_rva != 0 { lookup_rva } else { address_rva };
        let mut symbols = Vec::new();
        if thunks_rva != 0 {
            let mut off = image.rva_to_off(thunks_rva)?;
            let step = if wide_thunks { 8 } else { 4 };
            for n in 0.. {
                if n >= MAX_THUNKS {
                    return Err(PeError::TruncatedBuffer);
                }
                let (value, is_ordinal) = if wide_thunks {
                    let v = read_u64(buf, off)?;
                    (v, v & (1 << 63) != 0)
                } else {
                    let v = read_u32(buf, off)? as u64;
                    (v, v & (1 << 31) != 0)
                };
                if value == 0 {
                    break;
                }
                if is_ordinal {
                    symbols.push(format!("ord#{}", value & 0xffff));
                } else {
                    let hint_rva = (value & 0x7fff_ffff) as u32;
                    let name_off = image
                        .rva_to_off(hint_rva)?
                        .checked_add(2)
                        .ok_or(PeError::TruncatedBuffer)?;
                    symbols.push(read_cstr(buf, name_off)?);
                }
                off += step;
            }
        }
        entries.push(ImportEntry { importer: importer.clone(), imported_dll, symbols });
    }
    Ok(entries)
}
