// Mono 16-bit PCM WAV encode/decode, matching the server's file format.
// Scale 32768 with clipping keeps the round-trip error within 1/32768.

const PCM_SCALE = 32768;

export function encodeWavPcm16(samples: number[] | Float64Array, sampleRate: number): ArrayBuffer {
	const n = samples.length;
	const buf = new ArrayBuffer(44 + 2 * n);
	const view = new DataView(buf);
	const writeAscii = (offset: number, text: string) => {
		for (let i = 0; i < text.length; i++) view.setUint8(offset + i, text.charCodeAt(i));
	};
	writeAscii(0, 'RIFF');
	view.setUint32(4, 36 + 2 * n, true);
	writeAscii(8, 'WAVE');
	writeAscii(12, 'fmt ');
	view.setUint32(16, 16, true);
	view.setUint16(20, 1, true); // PCM
	view.setUint16(22, 1, true); // mono
	view.setUint32(24, sampleRate, true);
	view.setUint32(28, sampleRate * 2, true);
	view.setUint16(32, 2, true);
	view.setUint16(34, 16, true);
	writeAscii(36, 'data');
	view.setUint32(40, 2 * n, true);
	for (let i = 0; i < n; i++) {
		const q = Math.max(-PCM_SCALE, Math.min(PCM_SCALE - 1, Math.round(samples[i] * PCM_SCALE)));
		view.setInt16(44 + 2 * i, q, true);
	}
	return buf;
}

export function decodeWavPcm16(buf: ArrayBuffer): { samples: number[]; sampleRate: number } {
	const view = new DataView(buf);
	const ascii = (offset: number, len: number) => {
		let s = '';
		for (let i = 0; i < len; i++) s += String.fromCharCode(view.getUint8(offset + i));
		return s;
	};
	if (ascii(0, 4) !== 'RIFF' || ascii(8, 4) !== 'WAVE') {
		throw new Error('not a RIFF/WAVE file');
	}
	if (view.getUint16(20, true) !== 1 || view.getUint16(22, true) !== 1 ||
		view.getUint16(34, true) !== 16) {
		throw new Error('expected mono 16-bit PCM');
	}
	const sampleRate = view.getUint32(24, true);
	// find the data chunk (fmt may be followed by extension chunks)
	let offset = 12;
	while (offset + 8 <= view.byteLength) {
		const id = ascii(offset, 4);
		const size = view.getUint32(offset + 4, true);
		if (id === 'data') {
			const n = Math.floor(size / 2);
			const samples = new Array<number>(n);
			for (let i = 0; i < n; i++) {
				samples[i] = view.getInt16(offset + 8 + 2 * i, true) / PCM_SCALE;
			}
			return { samples, sampleRate };
		}
		offset += 8 + size + (size % 2);
	}
	throw new Error('no data chunk found');
}
