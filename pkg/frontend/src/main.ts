// Wires the control surface to the generation server's WebSocket bridge.

import { Store } from './store.js';
import { ControlClient } from './ws-client.js';
import { createXyPad } from './ui/xypad.js';
import { createKnob } from './ui/knob.js';
import { createWaveformView } from './ui/waveform.js';
import { isPlayable, regionSeconds, sliceSamples } from './trim.js';
import { encodeWavPcm16 } from './wav.js';

const WS_PORT = Number(new URLSearchParams(location.search).get('port') ?? 7771);
const WS_URL = `ws://${location.hostname || 'localhost'}:${WS_PORT}/`;

const store = new Store();
let audioCtx: AudioContext | null = null;

const statusEl = document.getElementById('status') as HTMLSpanElement;
const padCanvas = document.getElementById('pad') as HTMLCanvasElement;
const knobCanvas = document.getElementById('fine') as HTMLCanvasElement;
const waveCanvas = document.getElementById('wave') as HTMLCanvasElement;
const rangeSelect = document.getElementById('range') as HTMLSelectElement;
const categorySelect = document.getElementById('category') as HTMLSelectElement;
const playButton = document.getElementById('play') as HTMLButtonElement;
const exportButton = document.getElementById('export') as HTMLButtonElement;

const client = new ControlClient({
	url: WS_URL,
	onStatus(connected) {
		store.setStatus(connected ? 'connected' : 'disconnected');
	},
	onRender(reply) {
		if (reply.samples && reply.rate) {
			store.setWaveform(reply.samples, reply.rate, reply.id);
		}
	}
});

function requestCurrent(): void {
	if (!store.controlsEnabled) return;
	client.requestGeneration(store.outgoing());
}

const pad = createXyPad(padCanvas, (x, y) => {
	store.setControls(x, y, store.get().p3);
	requestCurrent();
});
const knob = createKnob(knobCanvas, (v) => {
	const s = store.get();
	store.setControls(s.p1, s.p2, v);
	requestCurrent();
});
const waveView = createWaveformView(waveCanvas, (region) => store.setTrim(region));

rangeSelect.addEventListener('change', () => {
	store.setRange(Number(rangeSelect.value));
	requestCurrent();
});
categorySelect.addEventListener('change', () => {
	// switching category regenerates at the current knob position
	store.setCategory(Number(categorySelect.value));
	requestCurrent();
});

playButton.addEventListener('click', () => {
	const s = store.get();
	if (!s.waveform || !isPlayable(s.trim)) return;
	audioCtx = audioCtx ?? new AudioContext();
	const region = sliceSamples(s.waveform, s.trim);
	const buffer = audioCtx.createBuffer(1, region.length, s.sampleRate);
	buffer.getChannelData(0).set(region);
	const src = audioCtx.createBufferSource();
	src.buffer = buffer;
	src.connect(audioCtx.destination);
	src.start(0, 0, regionSeconds(s.trim, s.sampleRate));
});

exportButton.addEventListener('click', () => {
	const s = store.get();
	if (!s.waveform || !isPlayable(s.trim)) return;
	const wav = encodeWavPcm16(sliceSamples(s.waveform, s.trim), s.sampleRate);
	const blob = new Blob([wav], { type: 'audio/wav' });
	const a = document.createElement('a');
	a.href = URL.createObjectURL(blob);
	a.download = 'ndf-trim.wav';
	a.click();
	URL.revokeObjectURL(a.href);
});

store.subscribe((s) => {
	statusEl.textContent = s.status;
	statusEl.className = s.status;
	const enabled = s.status === 'connected';
	pad.setEnabled(enabled);
	knob.setEnabled(enabled);
	rangeSelect.disabled = !enabled;
	categorySelect.disabled = !enabled;
	const playable = s.waveform !== null && isPlayable(s.trim);
	playButton.disabled = !playable;
	exportButton.disabled = !playable;
	waveView.setWaveform(s.waveform);
	waveView.setTrim(s.trim);
});

store.setStatus('connecting');
client.connect();
